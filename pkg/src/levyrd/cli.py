"""Command-line entry point.

Exit codes: 0 success, 1 suite violations, 2 configuration error,
3 path-failure rate above threshold, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_noise_suite_config, load_projection_config, load_run_config
from .diagnostics import (
    NormIndices,
    default_radii,
    empirical_law_distance,
    moment_table,
    path_norms,
    tightness_proxy,
)
from .haar import INEQUALITIES, REPORTED_ONLY, projection_inequality_suite, random_path_corpus
from .noise import noise_law_suite
from .paths import PathEnsemble
from .records import encode_ensemble
from .solver import constant_ensemble, fixed_point_iterate, induction_ensemble

OUT_ENV = "LEVYRD_OUT_DIR"
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_FAILURES, EXIT_IO = 0, 1, 2, 3, 4


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


@dataclass
class RunResult:
    ensemble: PathEnsemble
    moments: list
    tightness: list
    trace: list  # (sweep, distance, phi_mean, in_set, failures)
    residual: float
    failure_rate: float


def compute_run(config: RunConfig, threads: int = 1) -> RunResult:
    """Everything ``run`` writes, computed in memory."""
    problem, solve = config.problem, config.solve
    residual = math.nan
    if config.mode == "induction":
        ens, residuals = induction_ensemble(problem, solve, config.seed, threads)
        ok = residuals[np.isfinite(residuals)]
        residual = float(ok.max()) if ok.size else math.nan
        healthy = ens.healthy()
        trace = []
        if len(healthy) >= 2:
            half = len(healthy) // 2
            a = PathEnsemble(healthy.grid, healthy.values[:half], eigenvalues=healthy.eigenvalues)
            b = PathEnsemble(healthy.grid, healthy.values[half:], eigenvalues=healthy.eigenvalues)
            trace.append((0, empirical_law_distance(a, b), math.nan, True, int(ens.failed.sum())))
    else:
        init = constant_ensemble(problem, solve)
        rep = fixed_point_iterate(problem, init, solve, config.seed, threads)
        ens = rep.ensemble
        trace = [
            (i, d, p, s, f)
            for i, (d, p, s, f) in enumerate(zip(rep.distances, rep.phi_means, rep.in_set, rep.failures))
        ]
    healthy = ens.healthy()
    idx = NormIndices(m=solve.m, m0=solve.m0, m1=solve.m1, alpha=solve.alpha)
    if len(healthy):
        norms = path_norms(healthy, idx)
        moments = moment_table(healthy, idx, norms)
        radii = default_radii(norms[1], config.tightness_points)
        tight = tightness_proxy(healthy, radii, solve.m0, idx, xprime=norms[1])
    else:
        moments, tight = [], []
    return RunResult(ens, moments, tight, trace, residual, float(ens.failed.mean()))


def manifest_text(config: RunConfig, result: RunResult) -> str:
    lines = [f"version={__version__}", f"seed={config.seed}", f"mode={config.mode}"]
    for section in sorted(config.raw):
        for key in sorted(config.raw[section]):
            lines.append(f"config.{section}.{key}={config.raw[section][key].strip()}")
    for key, val in asdict(config.solve).items():
        lines.append(f"solver.{key}={fmt(val)}")
    lines += [
        f"model.reaction={config.problem.model.reaction}",
        f"domain.total_modes={config.problem.domain.total_modes}",
        f"paths={len(result.ensemble)}",
        f"failed={int(result.ensemble.failed.sum())}",
        f"failure_rate={fmt(result.failure_rate)}",
        f"self_consistency_residual={fmt(result.residual)}",
    ]
    return "\n".join(lines) + "\n"


def run_outputs(config: RunConfig, result: RunResult) -> dict[str, bytes]:
    files = {
        "manifest.txt": manifest_text(config, result).encode(),
        "moments.csv": to_csv(
            ["moment", "exponent", "mean", "std_error"],
            [(r.name, r.exponent, r.mean, r.se) for r in result.moments],
        ).encode(),
        "law_distance.csv": to_csv(
            ["sweep", "distance", "phi_mean", "in_set", "failures"], result.trace
        ).encode(),
        "tightness.csv": to_csv(
            ["radius", "tail", "chebyshev_bound", "tail_std_error"],
            [(r.radius, r.tail, r.bound, r.tail_se) for r in result.tightness],
        ).encode(),
    }
    if config.fmt == "binary":
        files["ensemble.bin"] = encode_ensemble(result.ensemble)
    return files


def _write(out_dir: Path, files: dict[str, bytes]):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out_dir / name).write_bytes(data)


def _error_record(out_dir: Path, code: int, field: str, message: str):
    text = f"exit_code={code}\nfield={field}\nmessage={message}\n"
    try:
        _write(out_dir, {"error.txt": text.encode()})
    except OSError:
        pass
    sys.stderr.write(f"error [{field}]: {message}\n")


def _resolve_out(flag, config_dir=None) -> Path:
    return Path(flag or config_dir or os.environ.get(OUT_ENV) or "levyrd_out")


def run_experiment(config_path, seed=None, out_dir=None, threads: int = 1, fmt_override=None) -> int:
    try:
        config = load_run_config(config_path)
    except ConfigError as exc:
        _error_record(_resolve_out(out_dir), EXIT_CONFIG, exc.field, exc.message)
        return EXIT_CONFIG
    except OSError as exc:
        _error_record(_resolve_out(out_dir), EXIT_IO, "config", str(exc))
        return EXIT_IO
    if seed is not None:
        config.seed = int(seed)
    if fmt_override:
        config.fmt = fmt_override
    target = _resolve_out(out_dir, config.out_dir)
    result = compute_run(config, threads)
    try:
        _write(target, run_outputs(config, result))
    except OSError as exc:
        _error_record(target, EXIT_IO, "output.dir", str(exc))
        return EXIT_IO
    if result.failure_rate > config.max_failure_rate:
        _error_record(target, EXIT_FAILURES, "run.max_failure_rate",
                      f"failure rate {result.failure_rate:.4g} exceeds {config.max_failure_rate:.4g}")
        return EXIT_FAILURES
    return EXIT_OK


def suite_projections(config_path, out_dir=None, seed=None) -> int:
    try:
        cfg = load_projection_config(config_path)
    except ConfigError as exc:
        _error_record(_resolve_out(out_dir), EXIT_CONFIG, exc.field, exc.message)
        return EXIT_CONFIG
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    corpus = random_path_corpus(rng, cfg.paths // 2, cfg.paths - cfg.paths // 2)
    rows = projection_inequality_suite(corpus, cfg.levels, cfg.ms, cfg.alphas)
    table = to_csv(
        ["path_id", "kappa", "m", "alpha", "inequality", "lhs", "rhs", "margin", "violated"],
        [(r.path_id, r.kappa, r.m, r.alpha, r.inequality, r.lhs, r.rhs, r.margin, r.violated) for r in rows],
    )
    summary = []
    for key in INEQUALITIES:
        sel = [r for r in rows if r.inequality == key]
        if key in REPORTED_ONLY:
            summary.append((key, len(sel), 0, max((r.lhs for r in sel), default=math.nan)))
        else:
            summary.append((key, len(sel), sum(r.violated for r in sel),
                            max((r.lhs - r.rhs for r in sel), default=math.nan)))
    try:
        _write(_resolve_out(out_dir), {
            "inequalities.csv": table.encode(),
            "inequality_summary.csv": to_csv(["inequality", "rows", "violations", "max_excess"], summary).encode(),
        })
    except OSError as exc:
        _error_record(_resolve_out(out_dir), EXIT_IO, "output.dir", str(exc))
        return EXIT_IO
    for key, n, bad, worst in summary:
        print(f"{key}: {n} rows, {bad} violations, worst {fmt(worst)}")
    return EXIT_VIOLATION if any(s[2] for s in summary) else EXIT_OK


def suite_noise(config_path, out_dir=None, seed=None) -> int:
    try:
        samples, cfg_seed = load_noise_suite_config(config_path)
    except ConfigError as exc:
        _error_record(_resolve_out(out_dir), EXIT_CONFIG, exc.field, exc.message)
        return EXIT_CONFIG
    checks = noise_law_suite(cfg_seed if seed is None else seed, samples)
    table = to_csv(["check", "statistic", "threshold", "passed", "detail"],
                   [(c.name, c.statistic, c.threshold, c.passed, c.detail) for c in checks])
    try:
        _write(_resolve_out(out_dir), {"noise_laws.csv": table.encode()})
    except OSError as exc:
        _error_record(_resolve_out(out_dir), EXIT_IO, "output.dir", str(exc))
        return EXIT_IO
    for c in checks:
        print(f"{c.name}: {'pass' if c.passed else 'FAIL'} ({fmt(c.statistic)} vs {fmt(c.threshold)})")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VIOLATION


def plot_columnar(csv_path, out=None) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        sys.stderr.write(f"error [plot]: {exc}\n")
        return EXIT_IO
    if len(rows) < 2:
        sys.stderr.write("error [plot]: no data rows\n")
        return EXIT_CONFIG
    header, body = rows[0], rows[1:]

    def column(j):
        try:
            return np.array([float(r[j]) for r in body])
        except ValueError:
            return None

    x = column(0)
    xs = x if x is not None else np.arange(len(body))
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(1, len(header)):
        y = column(j)
        if y is not None:
            ax.plot(xs, y, marker="o", label=header[j])
    ax.set_xlabel(header[0])
    if x is not None and np.all(xs > 0) and np.all(np.isfinite(xs)) and xs.max() / xs.min() > 50:
        ax.set_xscale("log")
    ax.legend()
    fig.tight_layout()
    target = Path(out) if out else Path(csv_path).with_suffix(".png")
    try:
        fig.savefig(target, dpi=120)
    except OSError as exc:
        sys.stderr.write(f"error [plot]: {exc}\n")
        return EXIT_IO
    finally:
        plt.close(fig)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyrd", description="Stochastic reaction-diffusion fixed-point experiments")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_ENV} or ./levyrd_out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for ensemble maps")
    common.add_argument("--format", choices=("csv", "binary"), default=None,
                        help="binary also writes an ensemble snapshot")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run an experiment from an INI config")
    run.add_argument("config")
    suite = sub.add_parser("suite", help="property suites")
    suite_sub = suite.add_subparsers(dest="suite", required=True)
    for name in ("projections", "noise"):
        p = suite_sub.add_parser(name, parents=[common])
        p.add_argument("config")
    plot = sub.add_parser("plot", help="render a columnar file to PNG")
    plot.add_argument("csv")
    plot.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config, args.seed, args.out_dir, max(1, args.threads), args.format)
    if args.command == "suite":
        fn = suite_projections if args.suite == "projections" else suite_noise
        return fn(args.config, args.out_dir, args.seed)
    return plot_columnar(args.csv, args.out)


if __name__ == "__main__":
    sys.exit(main())
