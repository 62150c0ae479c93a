"""Command-line entry point.

Subcommands
-----------
simulate   fixed-cwnd run of the bare simulator (no agent)
train      one 200-step online DQN episode
grid       the factorial experiment grid -> runs.csv + steps.csv
analyze    coded-factor OLS on a runs.csv -> regression.csv + printed table
baseline   one episode with uniform-random actions (control condition)

Configuration is a flat key=value file with dotted namespaces
(sim.segment_bytes=1000, dqn.gamma=0.95, '#' comments allowed); --override
flags win over file values and unknown keys are rejected.  All CSVs are
written atomically and every output is fully determined by --base-seed.

Exit codes: 0 success, 2 invalid input, 3 training divergence (train),
4 partial grid failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import experiments, stats
from .dqn import DqnConfig
from .env import EnvConfig
from .netsim import (InvalidConfigError, LinkSpec, SimConfig, Simulator,
                     validate_config)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4

STEPS_HEADER = ["run_id", "step", "cwnd", "throughput_Bps", "avg_rtt_ms",
                "reward", "epsilon", "loss"]
RUNS_HEADER = ["run_id", "layers", "learning_rate", "error_rate", "rep",
               "seed", "avg_throughput_Bps", "max_throughput_Bps",
               "convergence_step", "cumulative_reward", "final_cwnd",
               "diverged"]
REGRESSION_HEADER = ["term", "influence", "coefficient", "std_error",
                     "t_value", "p_value"]


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


# -- configuration -----------------------------------------------------------

_INT = int
_FLOAT = float

#: dotted key -> (section, field path, type); the single registry that makes
#: unknown keys rejectable.
CONFIG_KEYS = {
    "sim.access_link.rate_bps": ("sim", ("access_link", "rate_bps"), _INT),
    "sim.access_link.prop_delay_ms": ("sim", ("access_link", "prop_delay_ms"), _FLOAT),
    "sim.access_link.loss_prob": ("sim", ("access_link", "loss_prob"), _FLOAT),
    "sim.bottleneck_link.rate_bps": ("sim", ("bottleneck_link", "rate_bps"), _INT),
    "sim.bottleneck_link.prop_delay_ms": ("sim", ("bottleneck_link", "prop_delay_ms"), _FLOAT),
    "sim.bottleneck_link.loss_prob": ("sim", ("bottleneck_link", "loss_prob"), _FLOAT),
    "sim.segment_bytes": ("sim", ("segment_bytes",), _INT),
    "sim.ack_bytes": ("sim", ("ack_bytes",), _INT),
    "sim.queue_capacity_segments": ("sim", ("queue_capacity_segments",), _INT),
    "sim.rto_ms": ("sim", ("rto_ms",), _FLOAT),
    "sim.rtt_ewma_alpha": ("sim", ("rtt_ewma_alpha",), _FLOAT),
    "sim.cwnd_max": ("sim", ("cwnd_max",), _INT),
    "env.decision_interval_ms": ("env", ("decision_interval_ms",), _FLOAT),
    "env.episode_length": ("env", ("episode_length",), _INT),
    "env.cwnd_min": ("env", ("cwnd_min",), _INT),
    "env.cwnd_max": ("env", ("cwnd_max",), _INT),
    "dqn.hidden_count": ("dqn", ("hidden_count",), _INT),
    "dqn.hidden_width": ("dqn", ("hidden_width",), _INT),
    "dqn.learning_rate": ("dqn", ("learning_rate",), _FLOAT),
    "dqn.gamma": ("dqn", ("gamma",), _FLOAT),
    "dqn.epsilon_start": ("dqn", ("epsilon_start",), _FLOAT),
    "dqn.epsilon_min": ("dqn", ("epsilon_min",), _FLOAT),
    "dqn.epsilon_decay": ("dqn", ("epsilon_decay",), _FLOAT),
    "dqn.batch_size": ("dqn", ("batch_size",), _INT),
    "dqn.buffer_capacity": ("dqn", ("buffer_capacity",), _INT),
    "dqn.target_sync_every": ("dqn", ("target_sync_every",), _INT),
    "dqn.train_updates_per_step": ("dqn", ("train_updates_per_step",), _INT),
}


def parse_config_file(path: str) -> dict[str, str]:
    settings: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                settings[key.strip()] = value.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    return settings


def build_configs(settings: dict[str, str]):
    """Resolve key=value settings into (SimConfig, EnvConfig, DqnConfig)."""
    sim_cfg = SimConfig()
    env_cfg = EnvConfig()
    dqn_cfg = DqnConfig()
    for key, raw in settings.items():
        if key not in CONFIG_KEYS:
            raise CliError(f"unknown configuration key {key!r}")
        section, path, cast = CONFIG_KEYS[key]
        try:
            value = cast(raw)
        except ValueError:
            raise CliError(f"{key}: cannot parse {raw!r} as {cast.__name__}")
        if section == "sim":
            if len(path) == 2:
                link = replace(getattr(sim_cfg, path[0]), **{path[1]: value})
                sim_cfg = replace(sim_cfg, **{path[0]: link})
            else:
                sim_cfg = replace(sim_cfg, **{path[0]: value})
        elif section == "env":
            env_cfg = replace(env_cfg, **{path[0]: value})
        else:
            dqn_cfg = replace(dqn_cfg, **{path[0]: value})
    env_cfg = replace(env_cfg, sim=sim_cfg)
    try:
        validate_config(sim_cfg)
        env_cfg.validate()
        dqn_cfg.validate()
    except (InvalidConfigError, ValueError) as exc:
        raise CliError(str(exc))
    return sim_cfg, env_cfg, dqn_cfg


def gather_settings(args) -> dict[str, str]:
    settings: dict[str, str] = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    for item in args.override or []:
        if "=" not in item:
            raise CliError(f"--override expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


# -- output helpers ----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv_atomic(path: str, header: list[str], rows) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(row[col]) for col in header])
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def record_to_row(rec: experiments.RunRecord) -> dict:
    return {
        "run_id": rec.spec.run_id,
        "layers": rec.spec.layers,
        "learning_rate": rec.spec.learning_rate,
        "error_rate": rec.spec.error_rate,
        "rep": rec.spec.rep,
        "seed": rec.spec.seed,
        "avg_throughput_Bps": rec.avg_throughput_Bps,
        "max_throughput_Bps": rec.max_throughput_Bps,
        "convergence_step": rec.convergence_step,
        "cumulative_reward": rec.cumulative_reward,
        "final_cwnd": rec.final_cwnd,
        "diverged": rec.diverged,
    }


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    settings = gather_settings(args)
    sim_cfg, env_cfg, _ = build_configs(settings)
    sim_cfg = replace(sim_cfg, seed=args.base_seed)
    try:
        sim = Simulator(sim_cfg)
        sim.set_cwnd(args.cwnd)
    except (InvalidConfigError, ValueError) as exc:
        raise CliError(str(exc))
    interval = env_cfg.decision_interval_ms
    steps = max(1, int(round(args.duration_ms / interval)))
    rows = []
    for step in range(1, steps + 1):
        st = sim.advance(interval)
        rows.append({
            "run_id": "simulate",
            "step": step,
            "cwnd": sim.cwnd,
            "throughput_Bps": st.throughput_Bps,
            "avg_rtt_ms": st.avg_rtt_ms,
            "reward": None,
            "epsilon": None,
            "loss": None,
        })
    counters = sim.counters()
    duration_s = steps * interval / 1000.0
    throughput = counters.segments_acked_total * sim_cfg.segment_bytes / duration_s
    write_csv_atomic(os.path.join(args.out_dir, "steps.csv"),
                     STEPS_HEADER, rows)
    print(f"throughput_Bps={throughput}")
    print(f"avg_rtt_ms={counters.rtt_ewma_ms}")
    print(f"bytes_sent_total={counters.bytes_sent_total}")
    print(f"segments_acked_total={counters.segments_acked_total}")
    print(f"retransmissions={counters.retransmissions}")
    print(f"drops_error={counters.drops_error}")
    print(f"drops_queue={counters.drops_queue}")
    return EXIT_OK


def _single_run(args, policy: str) -> int:
    settings = gather_settings(args)
    _, env_cfg, dqn_cfg = build_configs(settings)
    layers = getattr(args, "layers", 2)
    lr = getattr(args, "lr", dqn_cfg.learning_rate)
    if args.seed is not None:
        seed = args.seed
    else:
        seed = experiments.derive_seed(args.base_seed, layers, lr,
                                       args.error_rate, 0)
    spec = experiments.RunSpec(
        run_id=policy if policy == "baseline" else "train",
        layers=layers, learning_rate=lr, error_rate=args.error_rate,
        rep=0, seed=seed)
    record, trace = experiments.execute_run(
        spec, env_cfg, dqn_cfg,
        policy="random" if policy == "baseline" else "dqn")
    write_csv_atomic(os.path.join(args.out_dir, "steps.csv"),
                     STEPS_HEADER, trace)
    write_csv_atomic(os.path.join(args.out_dir, "runs.csv"),
                     RUNS_HEADER, [record_to_row(record)])
    for key, value in record_to_row(record).items():
        print(f"{key}={_fmt(value)}")
    if record.diverged:
        print("training diverged; partial trace retained", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_train(args) -> int:
    if args.layers not in (2, 4, 8):
        raise CliError("layers must be one of 2, 4, 8")
    return _single_run(args, "train")


def cmd_baseline(args) -> int:
    return _single_run(args, "baseline")


def _grid_worker(job):
    spec, env_cfg, dqn_cfg = job
    return experiments.execute_run(spec, env_cfg, dqn_cfg, policy="dqn")


def cmd_grid(args) -> int:
    settings = gather_settings(args)
    _, env_cfg, dqn_cfg = build_configs(settings)
    try:
        specs = experiments.enumerate_runs(
            experiments.FactorLevels(), design=args.design,
            reps=args.reps, base_seed=args.base_seed)
    except experiments.InvalidDesignError as exc:
        raise CliError(str(exc))
    jobs = [(spec, env_cfg, dqn_cfg) for spec in specs]
    workers = args.jobs or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_worker, jobs, chunksize=4))
    else:
        results = [_grid_worker(job) for job in jobs]
    records = [rec for rec, _ in results]
    steps_rows = [row for _, trace in results for row in trace]
    write_csv_atomic(os.path.join(args.out_dir, "runs.csv"),
                     RUNS_HEADER, [record_to_row(r) for r in records])
    write_csv_atomic(os.path.join(args.out_dir, "steps.csv"),
                     STEPS_HEADER, steps_rows)
    diverged = sum(r.diverged for r in records)
    print(f"runs={len(records)} diverged={diverged}")
    return EXIT_PARTIAL if diverged else EXIT_OK


def _parse_runs_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(f"cannot read runs file: {exc}") from exc


def cmd_analyze(args) -> int:
    factor_names = [f.strip() for f in args.factors.split(",")]
    if len(factor_names) != 2:
        raise CliError("--factors expects exactly two comma-separated names")
    rows = _parse_runs_csv(args.runs)
    if not rows:
        raise CliError(f"{args.runs} contains no runs")
    for name in factor_names:
        if name not in rows[0]:
            raise CliError(f"factor column {name!r} missing from {args.runs}")
    if args.response not in rows[0]:
        raise CliError(f"response column {args.response!r} missing from {args.runs}")

    rows = [r for r in rows if r["diverged"] != "true"]
    try:
        coded = {name: [stats.code_level(name, float(r[name])) for r in rows]
                 for name in factor_names}
    except stats.InvalidLevelError as exc:
        raise CliError(str(exc))
    for name in factor_names:
        if len(set(coded[name])) < 2:
            raise CliError(f"factor {name!r} needs at least two levels in the data")
    y = [float(r[args.response]) for r in rows]
    X, names = stats.make_interaction_design(
        coded[factor_names[0]], coded[factor_names[1]],
        factor_names[0], factor_names[1])
    try:
        table = stats.ols_fit(X, names, y)
    except (stats.SingularDesignError, ValueError) as exc:
        raise CliError(str(exc))
    out_rows = [{
        "term": row.term,
        "influence": row.influence,
        "coefficient": row.coefficient,
        "std_error": row.std_error,
        "t_value": row.t_value,
        "p_value": row.p_value,
    } for row in table]
    write_csv_atomic(os.path.join(args.out_dir, "regression.csv"),
                     REGRESSION_HEADER, out_rows)
    print(stats.render_table(table))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlcc",
        description="DQN congestion-window control workbench")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--base-seed", type=int, default=42)

    p = sub.add_parser("simulate", help="fixed-cwnd simulator run")
    common(p)
    p.add_argument("--cwnd", type=int, default=64)
    p.add_argument("--duration-ms", type=float, default=5000.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="one online DQN episode")
    common(p)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--error-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None,
                   help="explicit run seed (default: derived from base seed)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="factorial experiment grid")
    common(p)
    p.add_argument("--design", choices=("full", "pairwise"), default="full")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: available parallelism)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("analyze", help="coded-factor OLS on runs.csv")
    common(p)
    p.add_argument("--runs", default="runs.csv")
    p.add_argument("--factors", default="error_rate,layers",
                   help="two comma-separated factor columns")
    p.add_argument("--response", default="avg_throughput_Bps")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("baseline", help="uniform-random action episode")
    common(p)
    p.add_argument("--error-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_baseline)

    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
