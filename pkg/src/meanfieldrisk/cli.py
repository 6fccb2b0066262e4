"""Command-line interface.

Subcommands: simulate, loss-dist, variance, flocking, convergence,
expansion-error, reproduce.  Every command reads a JSON config (except
`reproduce`, which uses built-in presets) and writes RFC-4180 CSV files
with 17 significant digits, atomically (temp file + rename).  Exit
codes: 0 on success, 1 on configuration or usage errors, 2 on numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analytics, montecarlo
from .errors import ConfigError, NotApplicableError, NumericalError
from .model import SystemConfig, expansion_coefficients, validate_and_expand
from .presets import (
    EXPANSION_DELTA,
    EXPANSION_DIRECTION,
    EXPANSION_RHO,
    EXPANSION_SIGMA,
    PRESETS,
)
from .sde import TimeGrid, simulate_replication


def _fmt(value) -> str:
    """17-significant-digit decimal rendering; round-trips every float."""
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def load_config(path: str | os.PathLike) -> SystemConfig:
    """Parse and fully validate a JSON config file."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    config = SystemConfig.from_dict(data)
    validate_and_expand(config)
    return config


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    """Write rows atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    print(f"wrote {path} ({len(rows)} rows)")
    return path


def _write_trajectories(out_dir: Path, config: SystemConfig, replication: int,
                        name: str = "trajectories.csv") -> Path:
    layout = validate_and_expand(config)
    grid = TimeGrid.from_horizon(config.horizon, config.dt)
    traj = simulate_replication(layout, grid, config.y0, config.seed, replication)
    header = ["t"] + [f"agent_{i}" for i in range(layout.n_agents)] + ["mean"]
    times = grid.times
    rows = [
        [_fmt(times[m])]
        + [_fmt(traj.paths[i, m]) for i in range(layout.n_agents)]
        + [_fmt(traj.mean_path[m])]
        for m in range(grid.n_steps + 1)
    ]
    return write_csv(out_dir / name, header, rows)


def _write_loss_hist(out_dir: Path, config: SystemConfig, reps, seed, threads,
                     name: str = "loss_hist.csv") -> Path:
    dist = montecarlo.estimate_loss_distribution(
        config, reps=reps, seed=seed, threads=threads
    )
    rows = [
        [str(k), _fmt(dist.probabilities[k]), _fmt(dist.stderr[k])]
        for k in range(dist.probabilities.size)
    ]
    return write_csv(out_dir / name, ["defaults", "probability", "stderr"], rows)


def _write_variance(out_dir: Path, config: SystemConfig, tol: float,
                    name: str = "variance.csv") -> Path:
    layout = validate_and_expand(config)
    report = analytics.variance_report(layout, config.horizon, tol)
    rows = [["quadrature", _fmt(report.v2_quadrature), _fmt(config.horizon), _fmt(tol)]]
    if report.v2_closed_k2 is not None:
        rows.append(["closed_k2", _fmt(report.v2_closed_k2), _fmt(config.horizon), ""])
    if report.v2_homogeneous is not None:
        rows.append(["homogeneous", _fmt(report.v2_homogeneous), _fmt(config.horizon), ""])
    if report.v2_expansion is not None:
        rows.append(["expansion", _fmt(report.v2_expansion), _fmt(config.horizon), ""])
    return write_csv(out_dir / name, ["method", "value", "T", "tol"], rows)


def _write_convergence(out_dir: Path, config: SystemConfig, n_list, reps, seed,
                       threads, name: str = "convergence.csv") -> Path:
    rows_data = montecarlo.convergence_study(
        config, list(n_list), reps=reps, seed=seed, threads=threads
    )
    rows = [
        [str(r.n_agents), _fmt(r.p_hat), _fmt(r.log_rate), _fmt(r.asymptote), _fmt(r.gap)]
        for r in rows_data
    ]
    return write_csv(out_dir / name, ["N", "p_hat", "log_rate", "asymptote", "gap"], rows)


def _write_expansion(out_dir: Path, rows_data, name: str = "expansion.csv") -> Path:
    rows = [
        [_fmt(r.delta), _fmt(r.v2_quadrature), _fmt(r.v2_expansion), _fmt(r.abs_error)]
        for r in rows_data
    ]
    return write_csv(out_dir / name, ["delta", "v2_quad", "v2_hat", "abs_error"], rows)


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = SystemConfig.from_dict({**config.to_dict(), "seed": args.seed})
    _write_trajectories(Path(args.out_dir), config, args.replication)
    return 0


def _cmd_loss_dist(args) -> int:
    config = load_config(args.config)
    _write_loss_hist(Path(args.out_dir), config, args.reps, args.seed, args.threads)
    return 0


def _cmd_variance(args) -> int:
    config = load_config(args.config)
    _write_variance(Path(args.out_dir), config, args.tol)
    return 0


def _cmd_flocking(args) -> int:
    config = load_config(args.config)
    layout = validate_and_expand(config)
    bound = analytics.flocking_bound(layout, args.agent, args.delta, config.horizon)
    est = montecarlo.estimate_flocking_exceedance(
        config, args.agent, args.delta, reps=args.reps, seed=args.seed,
        threads=args.threads,
    )
    rows = [[
        str(args.agent), _fmt(args.delta), _fmt(bound.kappa), _fmt(bound.bound),
        _fmt(est.estimate), _fmt(est.stderr),
    ]]
    write_csv(
        Path(args.out_dir) / "flocking.csv",
        ["agent", "delta", "kappa", "bound", "frequency", "stderr"],
        rows,
    )
    return 0


def _cmd_convergence(args) -> int:
    config = load_config(args.config)
    n_list = _parse_int_list(args.n_list, "--n-list")
    _write_convergence(
        Path(args.out_dir), config, n_list, args.reps, args.seed, args.threads
    )
    return 0


def _cmd_expansion_error(args) -> int:
    config = load_config(args.config)
    layout = validate_and_expand(config)
    coeffs = expansion_coefficients(layout)
    spread = float(np.abs(coeffs.eps).max())
    if spread == 0.0:
        raise ConfigError(
            "config has homogeneous alpha: the expansion direction is undefined"
        )
    direction = list(coeffs.eps / spread)  # normalized so max |c_k| = 1
    deltas = _parse_float_list(args.deltas, "--deltas")
    rows = montecarlo.expansion_error_study(
        direction, list(layout.rho), list(layout.group_sigma),
        coeffs.alpha_bar, config.horizon, deltas,
    )
    _write_expansion(Path(args.out_dir), rows)
    return 0


def _cmd_reproduce(args) -> int:
    preset = PRESETS.get(args.preset)
    if preset is None:
        raise ConfigError(
            f"unknown preset {args.preset!r}; available: {', '.join(sorted(PRESETS))}"
        )
    out_dir = Path(args.out_dir)
    if preset.action == "report":
        config = _preset_config(preset, "", args)
        _write_trajectories(out_dir, config, replication=0)
        _write_loss_hist(out_dir, config, args.reps, args.seed, args.threads)
        _write_variance(out_dir, config, tol=1e-10)
    elif preset.action == "loss-table":
        for label in preset.configs:
            config = _preset_config(preset, label, args)
            _write_loss_hist(
                out_dir, config, args.reps, args.seed, args.threads,
                name=f"loss_hist_{label}.csv",
            )
    elif preset.action == "expansion-table":
        rows = []
        for alpha_bar in preset.alpha_bars:
            rows.extend(
                montecarlo.expansion_error_study(
                    list(EXPANSION_DIRECTION), list(EXPANSION_RHO),
                    list(EXPANSION_SIGMA), alpha_bar, 1.0, [EXPANSION_DELTA],
                )
            )
        _write_expansion(out_dir, rows)
    elif preset.action == "convergence":
        config = _preset_config(preset, "", args)
        _write_convergence(
            out_dir, config, preset.n_list, args.reps, args.seed, args.threads
        )
    return 0


def _preset_config(preset, label: str, args) -> SystemConfig:
    data = dict(preset.configs[label])
    if args.seed is not None:
        data["seed"] = args.seed
    if args.reps is not None:
        data["replications"] = args.reps
    return SystemConfig.from_dict(data)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag} must be a comma-separated integer list") from exc


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag} must be a comma-separated number list") from exc


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="meanfieldrisk",
        description="Simulation and tail-risk analytics for mean-field interacting diffusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--reps", type=int, default=None, help="override replication count")
        p.add_argument("--out-dir", default=".", help="directory for CSV outputs")
        p.add_argument(
            "--threads", type=int, default=None,
            help="worker threads (default: MEANFIELD_THREADS or all cores)",
        )

    p = sub.add_parser("simulate", help="dump one replication's trajectories")
    common(p)
    p.add_argument("--replication", type=int, default=0, help="replication index")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("loss-dist", help="histogram of defaulted-agent counts")
    common(p)
    p.set_defaults(func=_cmd_loss_dist)

    p = sub.add_parser("variance", help="V_T^2 by every applicable method")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10, help="quadrature tolerance")
    p.set_defaults(func=_cmd_variance)

    p = sub.add_parser("flocking", help="deviation bound vs empirical exceedance")
    common(p)
    p.add_argument("--agent", type=int, default=0, help="agent index")
    p.add_argument("--delta", type=float, required=True, help="deviation level")
    p.set_defaults(func=_cmd_flocking)

    p = sub.add_parser("convergence", help="decay-rate convergence study over N")
    common(p)
    p.add_argument("--n-list", required=True, help="comma-separated population sizes")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("expansion-error", help="quadrature vs expansion error sweep")
    common(p)
    p.add_argument(
        "--deltas", required=True,
        help="comma-separated heterogeneity scales (config's own spread = max|alpha_k/abar - 1|)",
    )
    p.set_defaults(func=_cmd_expansion_error)

    p = sub.add_parser("reproduce", help="run a built-in preset")
    p.add_argument("preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    common(p, config_required=False)
    p.set_defaults(func=_cmd_reproduce)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NotApplicableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
