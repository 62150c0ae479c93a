"""Factorial experiment runner: design enumeration, seeded run execution,
per-run metrics (including the cwnd plateau detector) and per-cell
aggregation.

Every run is one 200-step online-training episode.  Seeds derive from
(base_seed, cell, rep) via SHA-256, so the whole grid is reproducible and
runs can execute in any order or in parallel.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from itertools import product
from statistics import mean, stdev

import numpy as np

from .dqn import DqnAgent, DqnConfig, Transition, TrainingDivergedError
from .env import Action, Env, EnvConfig, normalize
from .netsim import LinkSpec


class InvalidDesignError(ValueError):
    pass


@dataclass(frozen=True)
class FactorLevels:
    layers: tuple = (2, 4, 8)
    learning_rate: tuple = (0.01, 0.001)
    error_rate: tuple = (0.0, 0.2)

    def validate(self) -> None:
        for name in ("layers", "learning_rate", "error_rate"):
            if not getattr(self, name):
                raise InvalidDesignError(f"empty level set for {name}")


#: Baseline levels used to hold the third factor fixed in pairwise designs.
BASELINE = {"layers": 2, "learning_rate": 0.01, "error_rate": 0.0}


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    layers: int
    learning_rate: float
    error_rate: float
    rep: int
    seed: int


@dataclass(frozen=True)
class RunRecord:
    spec: RunSpec
    avg_throughput_Bps: float
    max_throughput_Bps: float
    convergence_step: int | None
    cumulative_reward: float
    final_cwnd: int
    diverged: bool
    wall_time_ms: int


@dataclass(frozen=True)
class ConvergenceParams:
    window: int = 20
    tolerance_frac: float = 0.10

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0.0 < self.tolerance_frac < 1.0:
            raise ValueError("tolerance_frac must be in (0, 1)")


def derive_seed(base_seed: int, layers: int, learning_rate: float,
                error_rate: float, rep: int) -> int:
    """Pure 64-bit seed for one (cell, rep); stable across platforms."""
    key = f"{base_seed}|{layers}|{learning_rate!r}|{error_rate!r}|{rep}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def _make_spec(layers, learning_rate, error_rate, rep, base_seed) -> RunSpec:
    return RunSpec(
        run_id=f"l{layers}-lr{learning_rate}-e{error_rate}-r{rep}",
        layers=layers,
        learning_rate=learning_rate,
        error_rate=error_rate,
        rep=rep,
        seed=derive_seed(base_seed, layers, learning_rate, error_rate, rep),
    )


def enumerate_runs(factors: FactorLevels, design: str = "full",
                   reps: int = 10, base_seed: int = 42) -> list[RunSpec]:
    """Expand the design into RunSpecs, ordered cell-lexicographic then rep.

    'full' is the Cartesian product of all level sets.  'pairwise' crosses
    each unordered factor pair while holding the third factor at its
    baseline level, with duplicate cells removed.
    """
    factors.validate()
    if reps < 1:
        raise InvalidDesignError("reps must be >= 1")
    if design == "full":
        cells = set(product(factors.layers, factors.learning_rate,
                            factors.error_rate))
    elif design == "pairwise":
        cells = set()
        for l, lr in product(factors.layers, factors.learning_rate):
            cells.add((l, lr, BASELINE["error_rate"]))
        for l, e in product(factors.layers, factors.error_rate):
            cells.add((l, BASELINE["learning_rate"], e))
        for lr, e in product(factors.learning_rate, factors.error_rate):
            cells.add((BASELINE["layers"], lr, e))
    else:
        raise InvalidDesignError(f"unknown design {design!r}")
    specs = []
    for l, lr, e in sorted(cells):
        for rep in range(reps):
            specs.append(_make_spec(l, lr, e, rep, base_seed))
    return specs


def convergence_step(cwnd_series, params: ConvergenceParams = ConvergenceParams()):
    """First step at which the cwnd moving average has permanently entered
    the tolerance band around its final plateau.

    Windows cover [s, s+w); the plateau P is the final window's mean; a
    window is in band when |mean - P| <= tolerance_frac * P.  The answer is
    the exclusive end index of the last out-of-band window plus one (0 when
    every window is in band).  If that lands within the final window span,
    the plateau was never held for a full window and None is returned.
    """
    params.validate()
    series = np.asarray(cwnd_series, dtype=np.float64)
    n = series.size
    w = params.window
    if n < 2 * w:
        raise ValueError(f"series length {n} < 2 * window {w}")
    cumsum = np.concatenate([[0.0], np.cumsum(series)])
    means = (cumsum[w:] - cumsum[:-w]) / w      # means[s] for s in [0, n-w]
    plateau = means[-1]
    in_band = np.abs(means - plateau) <= params.tolerance_frac * abs(plateau)
    bad = np.flatnonzero(~in_band)
    if bad.size == 0:
        return 0
    t = int(bad[-1]) + w + 1
    if t > n - w:
        return None
    return t


def _override_env_cfg(env_cfg: EnvConfig, error_rate: float) -> EnvConfig:
    bn = replace(env_cfg.sim.bottleneck_link, loss_prob=error_rate)
    return replace(env_cfg, sim=replace(env_cfg.sim, bottleneck_link=bn))


def _override_dqn_cfg(dqn_cfg: DqnConfig, spec: RunSpec) -> DqnConfig:
    return replace(dqn_cfg, hidden_count=spec.layers,
                   learning_rate=spec.learning_rate,
                   # decorrelate the agent's stream from the channel noise
                   seed=spec.seed ^ 0x5DEECE66D)


def execute_run(spec: RunSpec, env_cfg: EnvConfig, dqn_cfg: DqnConfig,
                policy: str = "dqn",
                conv_params: ConvergenceParams = ConvergenceParams()):
    """Run one online episode and return (RunRecord, trace rows).

    policy 'dqn' trains online; 'random' takes uniform actions and never
    trains (the control condition).  A diverged training run is truncated
    and flagged rather than raised.
    """
    t_start = time.monotonic()
    env = Env(_override_env_cfg(env_cfg, spec.error_rate))
    agent = DqnAgent(_override_dqn_cfg(dqn_cfg, spec))
    baseline_rng = np.random.default_rng(spec.seed ^ 0x9E3779B9)

    obs = env.reset(spec.seed)
    state = normalize(obs, env_cfg.normalization_scales)
    trace: list[dict] = []
    rewards: list[float] = []
    throughputs: list[float] = []
    cwnds: list[int] = []
    diverged = False

    for _ in range(env_cfg.episode_length):
        if policy == "random":
            action = int(baseline_rng.integers(3))
            epsilon = None
        else:
            action = agent.select_action(state)
            epsilon = agent.last_epsilon
        result = env.step(Action(action))
        next_state = normalize(result.observation, env_cfg.normalization_scales)
        loss = None
        if policy == "dqn":
            agent.observe(Transition(state, action, result.reward,
                                     next_state, result.done))
            try:
                for _ in range(dqn_cfg.train_updates_per_step):
                    loss = agent.learn()
            except TrainingDivergedError:
                diverged = True
        state = next_state
        obs = result.observation
        rewards.append(result.reward)
        throughputs.append(obs.throughput_Bps)
        cwnds.append(obs.cwnd_segments)
        trace.append({
            "run_id": spec.run_id,
            "step": result.step_index,
            "cwnd": obs.cwnd_segments,
            "throughput_Bps": obs.throughput_Bps,
            "avg_rtt_ms": obs.avg_rtt_ms,
            "reward": result.reward,
            "epsilon": epsilon,
            "loss": loss,
        })
        if diverged:
            break

    conv = None
    if not diverged and len(cwnds) >= 2 * conv_params.window:
        conv = convergence_step(cwnds, conv_params)
    record = RunRecord(
        spec=spec,
        avg_throughput_Bps=float(mean(throughputs)) if throughputs else 0.0,
        max_throughput_Bps=float(max(throughputs)) if throughputs else 0.0,
        convergence_step=conv,
        cumulative_reward=float(sum(rewards)),
        final_cwnd=cwnds[-1] if cwnds else env_cfg.cwnd_min,
        diverged=diverged,
        wall_time_ms=int((time.monotonic() - t_start) * 1000),
    )
    return record, trace


def aggregate(records: list[RunRecord]) -> list[dict]:
    """Per-cell means and sample standard deviations, diverged runs
    excluded from the statistics but counted."""
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = (rec.spec.layers, rec.spec.learning_rate, rec.spec.error_rate)
        groups.setdefault(key, []).append(rec)

    def _summary(values):
        if not values:
            return 0.0, 0.0
        return float(mean(values)), float(stdev(values)) if len(values) > 1 else 0.0

    rows = []
    for key in sorted(groups):
        ok = [r for r in groups[key] if not r.diverged]
        avg_m, avg_s = _summary([r.avg_throughput_Bps for r in ok])
        max_m, max_s = _summary([r.max_throughput_Bps for r in ok])
        conv_values = [r.convergence_step for r in ok
                       if r.convergence_step is not None]
        conv_m, conv_s = _summary(conv_values)
        rows.append({
            "layers": key[0],
            "learning_rate": key[1],
            "error_rate": key[2],
            "n": len(ok),
            "diverged": len(groups[key]) - len(ok),
            "avg_throughput_mean": avg_m,
            "avg_throughput_stddev": avg_s,
            "max_throughput_mean": max_m,
            "max_throughput_stddev": max_s,
            "convergence_n": len(conv_values),
            "convergence_mean": conv_m,
            "convergence_stddev": conv_s,
        })
    return rows
