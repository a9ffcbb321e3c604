"""Command line interface: ``suress fit | simulate | summarize | evaluate | diag``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
input-data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import (DataError, NumericalError, SpecError, fingerprint, format_float, read_config,
                   read_matrix, validate_spec, write_dataset, write_matrix)
from .inference import recovery_metrics, summarize, write_summary
from .sampler import run
from .simulate import default_recipe, simulate_eqtl, simulate_quickstart

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
MANIFEST = "manifest.json"
THREADS_ENV = "SUR_ESS_THREADS"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write_manifest(path: Path, manifest: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def _read_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST
    if not path.is_file():
        raise CliError(f"missing run artifact: {MANIFEST} not found in {run_dir}", EXIT_IO)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"corrupt {MANIFEST}: {exc}", EXIT_IO) from None


def _check_inventory(run_dir: Path, manifest: dict) -> None:
    if manifest.get("status") != "complete":
        raise CliError(f"run in {run_dir} did not complete (status: {manifest.get('status')})", EXIT_IO)
    for name in manifest.get("outputs", []):
        if not (run_dir / name).is_file():
            raise CliError(f"missing run artifact: {name} is listed in the manifest but not "
                           f"present in {run_dir}", EXIT_IO)


# ----------------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------------

def cmd_fit(args) -> int:
    config = read_config(args.config)
    data = config.load_data()
    spec = config.spec
    changes = {}
    if args.threads is not None:
        changes["max_threads"] = args.threads
    elif "maxThreads" not in config.keys and os.environ.get(THREADS_ENV):
        try:
            changes["max_threads"] = int(os.environ[THREADS_ENV])
        except ValueError:
            raise SpecError(f"{THREADS_ENV} must be an integer") from None
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        import dataclasses
        spec = dataclasses.replace(spec, **changes)
    spec = validate_spec(spec, data)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "software": "suress",
        "version": __version__,
        "status": "running",
        "model": spec.model_name,
        "spec": spec.echo(),
        "seed": spec.seed,
        "data": fingerprint(data),
        "config": str(Path(args.config).resolve()),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": [],
    }
    manifest_path = out / MANIFEST
    _write_manifest(manifest_path, manifest)
    start = time.perf_counter()
    try:
        output = run(spec, data, progress_every=args.progress)
        summary = summarize(output, threshold=args.threshold)
    except NumericalError:
        manifest["status"] = "failed"
        _write_manifest(manifest_path, manifest)
        raise
    files = write_summary(summary, output, data, out)
    manifest.update(status="complete", wall_clock_seconds=time.perf_counter() - start,
                    outputs=files, exchange_acceptance=_rate(output.exchange_accepts,
                                                             output.exchange_attempts),
                    final_temperature=float(output.temperature[-1]) if spec.n_iter else None)
    _write_manifest(manifest_path, manifest)
    print(f"{spec.model_name}: {int(summary.selected.sum())} of {data.s}x{data.p} selected "
          f"(mPIP > {args.threshold:g}); elpd.LOO {summary.elpd_loo:.4f}, "
          f"elpd.WAIC {summary.elpd_waic:.4f}; {output.runtime_seconds:.1f} s")
    return EXIT_OK


def _rate(a: int, b: int):
    return a / b if b else None


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "quickstart":
        data, B = simulate_quickstart(args.seed)
        truth = {"B_true.csv": B, "gamma_true.csv": (B != 0).astype(float)}
        extra = {}
        n_iter, burnin = 10000, 5000
    else:
        recipe = default_recipe(args.scale, seed=args.seed, n=args.n)
        if args.snr is not None:
            recipe.target_snr = args.snr if args.snr > 0 else None
        data, t = simulate_eqtl(recipe)
        truth = {"B_true.csv": t.B, "gamma_true.csv": t.gamma.astype(float),
                 "G_true.csv": t.graph.adjacency.astype(float), "precision_true.csv": t.precision}
        extra = {"snr": t.snr, "raw_snr": t.extra["raw_snr"]}
        n_iter, burnin = 50000, 25000
    blocks = write_dataset(data, out / "data.csv")
    y_names = list(data.y_names)
    for name, matrix in truth.items():
        header = y_names if matrix.shape[1] == data.s else None
        write_matrix(out / name, matrix, header)
    config = [
        "data = data.csv",
        f"Y = {blocks[0][0]}:{blocks[0][-1] + 1}",
        f"X = {blocks[1][0]}:{blocks[1][-1] + 1}",
        "covariancePrior = HIW",
        "gammaPrior = hotspot",
        f"nIter = {n_iter}",
        f"burnin = {burnin}",
        "nChains = 2",
        f"seed = {args.seed}",
    ]
    (out / "config.txt").write_text("\n".join(config) + "\n")
    info = {"kind": args.kind, "seed": args.seed, "n": data.n, "p": data.p, "s": data.s, **extra}
    (out / "simulation.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.kind} data ({data.n} x {data.s + data.p}) to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# summarize / evaluate
# ----------------------------------------------------------------------------

def _load(run_dir: Path, name: str) -> np.ndarray:
    path = run_dir / name
    if not path.is_file():
        raise CliError(f"missing run artifact: {name} not found in {run_dir}", EXIT_IO)
    return read_matrix(path)[1]


def cmd_summarize(args) -> int:
    run_dir = Path(args.run)
    manifest = _read_manifest(run_dir)
    _check_inventory(run_dir, manifest)
    gamma = _load(run_dir, "gamma_hat.csv")
    name = "beta_hat_conditional.csv" if args.beta_type == "conditional" else "beta_hat.csv"
    B = _load(run_dir, name)
    G = _load(run_dir, "G_hat.csv")
    sel = gamma > args.threshold
    p, s = gamma.shape
    write_matrix(run_dir / "selected.csv", sel.astype(float))
    write_matrix(run_dir / "beta_selected.csv", np.where(sel, B, 0.0))
    elpd = (run_dir / "elpd.txt").read_text().strip()
    iu = np.triu_indices(s, 1)
    n_edges = int(np.sum(G[iu] > args.threshold))
    print(f"Model: {manifest.get('model')}")
    print(f"Number of selected predictors (mPIP > {args.threshold:g}): {int(sel.sum())} of {s}x{p}")
    print(f"Edges in the response graph (> {args.threshold:g}): {n_edges} of {len(iu[0])}")
    for line in elpd.splitlines():
        print(line)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth_dir, run_dir = Path(args.truth), Path(args.run)
    gamma_true = _load(truth_dir, "gamma_true.csv")
    gamma_hat = _load(run_dir, "gamma_hat.csv")
    G_true = _load(truth_dir, "G_true.csv") if (truth_dir / "G_true.csv").is_file() else None
    G_hat = _load(run_dir, "G_hat.csv") if G_true is not None else None
    B_true = _load(truth_dir, "B_true.csv")
    B_hat = _load(run_dir, "beta_hat.csv")
    try:
        metrics = recovery_metrics(gamma_hat, gamma_true > 0.5, G_hat,
                                   None if G_true is None else G_true > 0.5, B_hat, B_true,
                                   threshold=args.threshold)
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    out = Path(args.out) if args.out else run_dir / "metrics.json"
    out.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    for key in sorted(metrics):
        value = metrics[key]
        print(f"{key} {format_float(value) if isinstance(value, float) else value}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------------

def window_densities(trace: np.ndarray, bins: int = 30):
    """Histogram densities of the third quarter and the last half of a trace on
    a common grid, plus their two-sample Kolmogorov-Smirnov statistic."""
    from scipy.stats import ks_2samp

    n = trace.size
    third = trace[n // 2: 3 * n // 4]
    last = trace[n // 2:]
    if third.size == 0 or last.size == 0:
        raise CliError("trace too short for moving-window diagnostics", EXIT_IO)
    lo, hi = float(trace[n // 2:].min()), float(trace[n // 2:].max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    d3, _ = np.histogram(third, bins=edges, density=True)
    dl, _ = np.histogram(last, bins=edges, density=True)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.column_stack([mids, d3, dl]), float(ks_2samp(third, last).statistic)


def graph_dot(G_hat: np.ndarray, names, threshold: float = 0.5) -> str:
    s = G_hat.shape[0]
    lines = ["graph responses {"]
    for k in range(s):
        lines.append(f'  n{k} [label="{names[k]}"];')
    for a in range(s):
        for b in range(a + 1, s):
            if G_hat[a, b] > threshold:
                lines.append(f'  n{a} -- n{b} [weight="{G_hat[a, b]:.4f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_diag(args) -> int:
    run_dir = Path(args.run)
    manifest = _read_manifest(run_dir)
    _check_inventory(run_dir, manifest)
    logp = _load(run_dir, "logP.csv")[:, 0]
    size = _load(run_dir, "model_size.csv")[:, 0]
    path = run_dir / "G_hat.csv"
    names, G_hat = read_matrix(path)
    it = np.arange(1, logp.size + 1)
    write_matrix(run_dir / "trace_logP.csv", np.column_stack([it, logp]), ["iteration", "logP"])
    write_matrix(run_dir / "trace_model_size.csv", np.column_stack([it, size]),
                 ["iteration", "model_size"])
    dens, ks = window_densities(logp, args.bins)
    write_matrix(run_dir / "density_logP.csv", dens, ["logP", "third_quarter", "last_half"])
    (run_dir / "density_ks.txt").write_text(f"ks_statistic {format_float(ks)}\n")
    (run_dir / "graph.dot").write_text(graph_dot(G_hat, names, args.threshold))
    print(f"trace length {logp.size}; KS(third quarter, last half) = {ks:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="suress", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run the sampler on a configuration file")
    p.add_argument("config", help="key = value configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (overrides maxThreads and ${THREADS_ENV})")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--progress", type=int, default=0, metavar="N",
                   help="print a progress line to stderr every N iterations")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write a simulated dataset with its truth")
    p.add_argument("kind", choices=["quickstart", "eqtl"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", choices=["paper", "desk"], default="paper",
                   help="eQTL truth pattern (paper: p=150, s=10; desk: p=50, s=5)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--snr", type=float, default=None,
                   help="target signal-to-noise ratio (0 keeps the raw noise)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="threshold a completed run")
    p.add_argument("run")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--beta-type", choices=["marginal", "conditional"], default="marginal")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score a run against simulated truth")
    p.add_argument("--truth", required=True, help="directory written by 'simulate'")
    p.add_argument("--run", required=True, help="directory written by 'fit'")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None, help="metrics file (default RUN/metrics.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diag", help="write trace, density and graph diagnostics")
    p.add_argument("run")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SpecError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
