"""Command-line front end: dataset generation, curve fitting, queries, slices,
and the kernel/tree benchmark.

Exit codes: 0 success, 2 invalid input, 3 computation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .casefile import CaseFileError, case_digest, load_case, reference_case_path
from .curve import (
    curve_from_json,
    curve_to_json,
    error_metrics,
    fit_curve,
    fit_tree,
    query_curve,
    slice_curve,
    tree_error_metrics,
)
from .gp import KERNEL_FAMILIES, GprConditioningError, GprInputError
from .idc import ModelInputError
from .lp import LpInputError, LpSolverError
from .robust import ModelInfeasibleError
from .sampling import CandidateGrid, SampleSet, SamplingError, generate_dataset

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 2, 3

_INPUT_ERRORS = (CaseFileError, ModelInputError, GprInputError, LpInputError, ValueError)
_COMPUTE_ERRORS = (SamplingError, ModelInfeasibleError, LpSolverError, GprConditioningError)


@dataclass
class RunManifest:
    command: str
    tool_version: str
    master_seed: int | None
    case_digest: str | None
    input_digest: str | None
    parameters: dict
    duration_seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _write_manifest(out_path: Path | None, manifest: RunManifest) -> dict:
    if out_path is not None:
        Path(str(out_path) + ".manifest.json").write_text(manifest.to_json() + "\n")
    return json.loads(manifest.to_json())


def _auto_batch(m: int) -> int:
    # acquisition refit cadence; depends only on m so that worker counts can
    # never alter the sampled sequence
    return max(1, -(-m // 64))


def _resolve_case_path(value: str) -> Path:
    if value == "reference":
        return reference_case_path()
    return Path(value)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    case = load_case(_resolve_case_path(args.case))
    batch = _auto_batch(args.samples) if args.batch == "auto" else int(args.batch)
    grid = CandidateGrid(levels=args.levels, cap=args.candidate_cap)
    samples = generate_dataset(
        case, args.samples, grid=grid, seed=args.seed,
        scenario_budget=args.scenario_budget, batch_size=batch,
        workers=args.workers, beta=args.beta,
    )
    out = Path(args.out)
    out.write_text(samples.to_csv())
    manifest = RunManifest(
        command="gen", tool_version=__version__, master_seed=args.seed,
        case_digest=case_digest(case), input_digest=None,
        parameters={
            "case": str(args.case), "samples": args.samples, "batch": batch,
            "workers": args.workers, "scenario_budget": args.scenario_budget,
            "levels": args.levels, "candidate_cap": args.candidate_cap,
            "beta": args.beta, "out": str(out),
        },
        duration_seconds=time.perf_counter() - t0,
    )
    _write_manifest(out, manifest)
    print(f"wrote {samples.n_samples} samples to {out}")
    return EXIT_OK


def _load_samples(path: str) -> SampleSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CaseFileError(f"cannot read samples file {path}: {exc}") from exc
    return SampleSet.from_csv(text)


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    samples = _load_samples(args.samples)
    model = fit_curve(samples, family=args.kernel, seed=args.seed)
    out = Path(args.out)
    out.write_text(curve_to_json(model, samples))
    manifest = RunManifest(
        command="fit", tool_version=__version__, master_seed=args.seed,
        case_digest=None, input_digest=samples.digest(),
        parameters={"samples": str(args.samples), "kernel": args.kernel,
                    "out": str(out)},
        duration_seconds=time.perf_counter() - t0,
    )
    _write_manifest(out, manifest)
    print(f"fitted {model.n_outputs} outputs ({args.kernel}) -> {out}")
    return EXIT_OK


def _load_model(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CaseFileError(f"cannot read model file {path}: {exc}") from exc
    try:
        return curve_from_json(text)
    except (KeyError, json.JSONDecodeError) as exc:
        raise CaseFileError(f"{path}: not a curve model file: {exc}") from exc


def cmd_query(args) -> int:
    t0 = time.perf_counter()
    model = _load_model(args.model)
    price = np.array([float(v) for v in args.price.split(",")])
    result = query_curve(model, price)
    doc = {
        "labels": list(model.labels),
        "price": price.tolist(),
        "mean": result.mean.tolist(),
        "variance": result.variance.tolist(),
        "lower95": result.lower.tolist(),
        "upper95": result.upper.tolist(),
    }
    manifest = RunManifest(
        command="query", tool_version=__version__, master_seed=None,
        case_digest=None, input_digest=model.train_digest,
        parameters={"model": str(args.model), "price": args.price},
        duration_seconds=time.perf_counter() - t0,
    )
    if args.out:
        out = Path(args.out)
        out.write_text(json.dumps(doc, indent=2) + "\n")
        _write_manifest(out, manifest)
    else:
        doc["manifest"] = json.loads(manifest.to_json())
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _parse_fixed(spec: str) -> dict[int, float]:
    fixed: dict[int, float] = {}
    if not spec:
        return fixed
    for part in spec.split(","):
        key, _, val = part.partition("=")
        fixed[int(key)] = float(val)
    return fixed


def cmd_slice(args) -> int:
    t0 = time.perf_counter()
    model = _load_model(args.model)
    k = model.train_inputs.shape[1]
    free = tuple(args.free)
    fixed = _parse_fixed(args.fixed)
    for dim in range(k):
        if dim not in free and dim not in fixed:
            fixed[dim] = args.fixed_default
    target = args.target
    if target != "total":
        target = int(target) if target.isdigit() else target
    table = slice_curve(model, fixed, free, grid=args.grid, lo=args.lo, hi=args.hi,
                        target=target)
    out = Path(args.out)
    out.write_text(table.to_csv())
    figure = None
    if args.plot:
        from .plots import render_slice

        figure = str(render_slice(table, out.with_suffix(".png")))
    manifest = RunManifest(
        command="slice", tool_version=__version__, master_seed=None,
        case_digest=None, input_digest=model.train_digest,
        parameters={
            "model": str(args.model), "free": list(free),
            "fixed": {str(d): v for d, v in sorted(fixed.items())},
            "grid": args.grid, "target": str(args.target), "out": str(out),
            "figure": figure,
        },
        duration_seconds=time.perf_counter() - t0,
    )
    _write_manifest(out, manifest)
    print(f"wrote slice table to {out}" + (f" and figure to {figure}" if figure else ""))
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    if bool(args.case) == bool(args.samples):
        raise CaseFileError("bench needs exactly one of --case or --samples")
    if args.case:
        case = load_case(_resolve_case_path(args.case))
        digest = case_digest(case)
        batch = _auto_batch(args.m)
        samples = generate_dataset(case, args.m, seed=args.seed, batch_size=batch,
                                   workers=args.workers)
    else:
        digest = None
        samples = _load_samples(args.samples)

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(samples.n_samples)
    n_train = max(4, int(round(0.8 * samples.n_samples)))
    train_idx = np.sort(order[:n_train])
    train = SampleSet(samples.prices[train_idx], samples.amounts[train_idx],
                      samples.sample_seeds[train_idx], samples.master_seed,
                      samples.labels)

    rows: list[tuple[str, float | None, float | None]] = []
    for family in KERNEL_FAMILIES:
        model = fit_curve(train, family=family, seed=args.seed)
        report = error_metrics(model, samples)
        rows.append((family, report.within_pct, report.out_pct))
    tree = fit_tree(train)
    report = tree_error_metrics(tree, train, samples)
    rows.append(("regression_tree", report.within_pct, report.out_pct))

    def fmt(v):
        return "   --" if v is None else f"{v:7.2f}"

    lines = [f"{'method':18s} {'within%':>8s} {'out%':>8s}"]
    for name, w, o in rows:
        lines.append(f"{name:18s} {fmt(w):>8s} {fmt(o):>8s}")
    text = "\n".join(lines)
    print(text)

    figure = None
    if args.out:
        out = Path(args.out)
        csv_lines = ["method,within_pct,out_pct"]
        for name, w, o in rows:
            csv_lines.append(f"{name},{'' if w is None else repr(w)},{'' if o is None else repr(o)}")
        out.write_text("\n".join(csv_lines) + "\n")
        if args.plot:
            from .plots import render_bench

            figure = str(render_bench(rows, out.with_suffix(".png")))
        manifest = RunManifest(
            command="bench", tool_version=__version__, master_seed=args.seed,
            case_digest=digest, input_digest=samples.digest(),
            parameters={
                "case": args.case, "samples": args.samples, "m": args.m,
                "split": "80/20 seeded", "out": str(out), "figure": figure,
                "metric": "100*rms(pred-actual)/rms(actual), pooled outputs",
            },
            duration_seconds=time.perf_counter() - t0,
        )
        _write_manifest(out, manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="drcurve",
        description="Estimate data-center demand-response price-amount curves "
                    "by robust operation sampling and Gaussian-process regression.",
    )
    p.add_argument("--version", action="version", version=f"drcurve {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a (price, amount) sample set")
    g.add_argument("--case", required=True,
                   help="case file path, or 'reference' for the bundled study")
    g.add_argument("--samples", "--m", dest="samples", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--workers", type=int, default=1,
                   help="parallel processes for the operation solves")
    g.add_argument("--batch", default="auto",
                   help="samples per acquisition round (auto: derived from m)")
    g.add_argument("--scenario-budget", type=int, default=16)
    g.add_argument("--levels", type=int, default=5,
                   help="lattice levels per price dimension")
    g.add_argument("--candidate-cap", type=int, default=4096)
    g.add_argument("--beta", type=float, default=0.0,
                   help="mean weight in the acquisition score (0: pure uncertainty)")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit the per-output GP curve model")
    f.add_argument("--samples", required=True, help="sample CSV from gen")
    f.add_argument("--kernel", default="se", choices=list(KERNEL_FAMILIES))
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="output model JSON path")
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("query", help="evaluate the fitted curve at one price vector")
    q.add_argument("--model", required=True)
    q.add_argument("--price", required=True, help="comma-separated prices, one per output")
    q.add_argument("--out", default=None, help="also write the result JSON here")
    q.set_defaults(func=cmd_query)

    s = sub.add_parser("slice", help="tabulate (and draw) a 1-D or 2-D curve slice")
    s.add_argument("--model", required=True)
    s.add_argument("--free", type=int, action="append", required=True,
                   help="free price dimension (repeat for a 2-D slice)")
    s.add_argument("--fixed", default="",
                   help="comma-separated dim=value pins for the other dimensions")
    s.add_argument("--fixed-default", type=float, default=0.25,
                   help="value used for dimensions not listed in --fixed")
    s.add_argument("--grid", type=int, default=25)
    s.add_argument("--lo", type=float, default=None)
    s.add_argument("--hi", type=float, default=None)
    s.add_argument("--target", default="total",
                   help="'total' or an output label/index")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="render a PNG next to the CSV")
    s.set_defaults(func=cmd_slice)

    b = sub.add_parser("bench", help="compare kernels and the tree baseline on one split")
    b.add_argument("--case", default=None,
                   help="case file (generates samples first); or use --samples")
    b.add_argument("--samples", default=None, help="existing sample CSV")
    b.add_argument("--m", type=int, default=200, help="samples to generate with --case")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", default=None, help="write the report CSV here")
    b.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _COMPUTE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # never a bare traceback for the operator
        print(f"unexpected failure: {exc!r}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
