"""``peaked`` command-line driver.

Exit codes: 0 success, 1 validation error, 2 integrity error,
3 partial run (resumable), 4 an oracle check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    KINDS,
    ExperimentManifest,
    IntegrityError,
    ManifestError,
    PartialRun,
    ResultRecord,
    read_manifest_data,
    run_experiment,
)

EXIT_OK, EXIT_INVALID, EXIT_INTEGRITY, EXIT_PARTIAL, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4


def _read_manifest(path: Path, kind: str | None, seed, out) -> ExperimentManifest:
    data = read_manifest_data(path)
    if kind is not None:
        data.setdefault("kind", kind)
        if data["kind"] != kind:
            raise ManifestError({"kind": f"manifest says {data['kind']!r} but the subcommand is {kind!r}"})
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out"] = str(out)
    return ExperimentManifest.from_dict(data)


def _resume_manifest(target: Path, seed, out) -> tuple[ExperimentManifest, Path]:
    """``resume`` accepts either an output directory or the original manifest file."""
    if target.is_dir():
        mpath = target / "manifest.json"
        try:
            stored = json.loads(mpath.read_text())
        except FileNotFoundError as exc:
            raise IntegrityError(mpath, "<file>", "missing; not an experiment directory") from exc
        except json.JSONDecodeError as exc:
            raise IntegrityError(mpath, "<json>", exc.msg) from exc
        if "manifest" not in stored:
            raise IntegrityError(mpath, "manifest", "missing")
        m = ExperimentManifest.from_dict(stored["manifest"])
        if stored.get("hash") != m.manifest_hash():
            raise IntegrityError(mpath, "hash", "does not match the stored manifest")
        return m, Path(out) if out else target
    m = _read_manifest(target, None, seed, out)
    return m, Path(m.out)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report(record: ResultRecord, out: Path, stream=None) -> None:
    """Tab-delimited summary of the aggregates."""
    stream = stream or sys.stdout
    agg = record.aggregates
    w = lambda *cols: print("\t".join(_fmt(c) for c in cols), file=stream)  # noqa: E731
    print(f"# {agg['kind']}  manifest {record.manifest_hash[:12]}  rows {len(record.rows)}  out {out}", file=stream)
    if agg["kind"] == "oracle-check":
        w("check", "n", "measured", "expected", "passed")
        for c in agg["checks"]:
            w(c["name"], c["n"], c["measured"], c["expected"], "PASS" if c["passed"] else "FAIL")
        return
    if agg["kind"] == "entropy-profile":
        w("n", "tau_r", "tau_p", "entropy_at_tau_r", "entropy_final", "page")
        for p in agg["points"]:
            w(p["n"], p["tau_r"], p["tau_p"], p["entropy_mean"][p["tau_r"]], p["entropy_mean"][-1], p["page"])
        return
    w("n", "tau_r", "tau_p", "count", "mean_delta", "stderr", "max_delta", "gamma_hat")
    for p in agg["points"]:
        w(p["n"], p["tau_r"], p["tau_p"], p["count"], p["mean_delta"], p["stderr_delta"], p["max_delta"], p["gamma_hat"])
    if agg["kind"] == "rarity":
        w("n", "delta", "p_hat", "ci_high", "bound", "consistent")
        for p in agg["points"]:
            for b in p["rarity"]:
                w(p["n"], b["delta"], b["p_hat"], b["ci_high"], b["bound"], b["consistent"])
    if agg["kind"] == "peak-sweep":
        for t in agg["trend"]:
            w("trend", t["n"], "spearman", t["spearman"], "strictly_increasing", t["strictly_increasing"])
    if agg["kind"] == "scaling-fit":
        for b in agg.get("baseline", []):
            w("baseline", b["n"], b["tau_r"], b["count"], b["mean_delta"], b["stderr_delta"])
        fit = agg.get("fit")
        if fit:
            w("fit", "c", fit["c"], "a", fit["a"])
            for e in fit["extrapolation"]:
                w("EXTRAPOLATION", e["n"], e["predicted_delta"])
        for a in agg.get("improvement_exponent", []):
            w("alpha", a["n"], a["alpha"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peaked", description="Peaked random circuit experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in KINDS + ("resume",):
        p = sub.add_parser(name, help=f"run a {name} experiment" if name != "resume" else "finish a partial run")
        p.add_argument("manifest", type=Path,
                       help="manifest file (YAML or JSON)" + ("; or an output directory" if name == "resume" else ""))
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides the manifest)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.add_argument("--stop-after", type=int, default=None, help=argparse.SUPPRESS)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.workers < 1:
            raise ManifestError({"--workers": "must be at least 1"})
        if args.command == "resume":
            manifest, out = _resume_manifest(args.manifest, args.seed, args.out)
        else:
            manifest = _read_manifest(args.manifest, args.command, args.seed, args.out)
            out = Path(manifest.out)
        record = run_experiment(manifest, out, workers=args.workers, stop_after=args.stop_after,
                                figures=not args.no_figures)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except PartialRun as exc:
        print(f"partial: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    report(record, out)
    if record.aggregates["kind"] == "oracle-check" and not all(c["passed"] for c in record.aggregates["checks"]):
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
