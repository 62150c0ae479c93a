"""Episodic gym-style environment around one simulator instance.

Each step applies a discrete congestion-window action (-1 / 0 / +1 segment,
clamped to [cwnd_min, cwnd_max]), advances the simulator by one decision
interval, and returns the six flow observables plus a reward equal to the
interval throughput normalized by bottleneck capacity, clamped to [0, 1].
Episodes run a fixed number of steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .netsim import IntervalStats, SimConfig, Simulator

#: Fixed normalization constants: cwnd, segment bytes, bytes sent, RTT ms,
#: segments acked, throughput B/s.
DEFAULT_SCALES = (200.0, 1500.0, 1e7, 1000.0, 1e4, 250000.0)


class EpisodeDoneError(RuntimeError):
    """step() was called on a finished episode."""


class Action(enum.IntEnum):
    DECREASE = 0
    HOLD = 1
    INCREASE = 2

    @property
    def delta(self) -> int:
        return int(self) - 1


@dataclass(frozen=True)
class Observation:
    cwnd_segments: int
    segment_bytes: int
    bytes_sent_total: int
    avg_rtt_ms: float
    segments_acked_total: int
    throughput_Bps: float

    def as_vector(self) -> np.ndarray:
        return np.array([
            self.cwnd_segments,
            self.segment_bytes,
            self.bytes_sent_total,
            self.avg_rtt_ms,
            self.segments_acked_total,
            self.throughput_Bps,
        ], dtype=np.float64)


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    step_index: int


@dataclass(frozen=True)
class EnvConfig:
    sim: SimConfig = SimConfig()
    decision_interval_ms: float = 100.0
    episode_length: int = 200
    cwnd_min: int = 1
    cwnd_max: int = 200
    normalization_scales: tuple = DEFAULT_SCALES

    def validate(self) -> None:
        if self.decision_interval_ms <= 0:
            raise ValueError("decision_interval_ms must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if not 1 <= self.cwnd_min <= self.cwnd_max:
            raise ValueError("need 1 <= cwnd_min <= cwnd_max")
        if self.cwnd_max > self.sim.cwnd_max:
            raise ValueError("cwnd_max exceeds the simulator ceiling")
        if len(self.normalization_scales) != 6 \
                or any(s <= 0 for s in self.normalization_scales):
            raise ValueError("normalization_scales must be six positive reals")


def compute_reward(stats: IntervalStats, bottleneck_rate_bps: int) -> float:
    """Interval throughput as a fraction of bottleneck capacity in [0, 1]."""
    capacity_Bps = bottleneck_rate_bps / 8.0
    return min(1.0, max(0.0, stats.throughput_Bps / capacity_Bps))


def normalize(obs: Observation, scales=DEFAULT_SCALES) -> np.ndarray:
    """Elementwise division by the fixed scales."""
    return obs.as_vector() / np.asarray(scales, dtype=np.float64)


def denormalize(vec: np.ndarray, scales=DEFAULT_SCALES) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64) * np.asarray(scales, dtype=np.float64)


class Env:
    """One agent, one flow; call reset() before stepping."""

    def __init__(self, cfg: EnvConfig):
        cfg.validate()
        self.cfg = cfg
        self._sim: Simulator | None = None
        self._step_count = 0
        self._done = True
        self._last_stats: IntervalStats | None = None

    @property
    def cwnd(self) -> int:
        assert self._sim is not None
        return self._sim.cwnd

    def reset(self, seed: int) -> Observation:
        self._sim = Simulator(replace(self.cfg.sim, seed=seed))
        if self.cfg.cwnd_min != 1:
            self._sim.set_cwnd(self.cfg.cwnd_min)
        self._step_count = 0
        self._done = False
        self._last_stats = None
        return self._observe()

    def step(self, action: Action) -> StepResult:
        if self._sim is None or self._done:
            raise EpisodeDoneError("episode is finished; call reset()")
        new_cwnd = min(self.cfg.cwnd_max,
                       max(self.cfg.cwnd_min,
                           self._sim.cwnd + Action(action).delta))
        self._sim.set_cwnd(new_cwnd)
        stats = self._sim.advance(self.cfg.decision_interval_ms)
        self._last_stats = stats
        self._step_count += 1
        self._done = self._step_count >= self.cfg.episode_length
        return StepResult(
            observation=self._observe(),
            reward=compute_reward(stats, self.cfg.sim.bottleneck_link.rate_bps),
            done=self._done,
            step_index=self._step_count,
        )

    def _observe(self) -> Observation:
        c = self._sim.counters()
        thr = self._last_stats.throughput_Bps if self._last_stats else 0.0
        return Observation(
            cwnd_segments=c.cwnd_segments,
            segment_bytes=self.cfg.sim.segment_bytes,
            bytes_sent_total=c.bytes_sent_total,
            avg_rtt_ms=c.rtt_ewma_ms,
            segments_acked_total=c.segments_acked_total,
            throughput_Bps=thr,
        )
