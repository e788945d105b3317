"""Seeded experiment pipelines with incremental, resumable persistence.

An output directory holds::

    manifest.json   the resolved manifest (written first)
    rows.tsv        one line per finished task, appended as tasks complete;
                    floats are hexadecimal, the last column is a CRC32 of the line
    PARTIAL         resumption marker, present while the run is incomplete
    record.json     aggregates + integrity data, written once all rows exist
    plot_*.tsv      plain x / y / err columns for plotting
    fig_*.png       figures rendered from the plot data (optional)
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import re
import time
import zlib
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import __version__
from .circuits import max_peak, run, sample_random_circuit, with_params
from .optimize import OptimizerConfig, optimize_peaking
from .oracle import (
    MEAN_MAX_SCHMIDT_WEIGHT,
    analytic_peaking_for,
    brute_force_max_peak,
    peaking_layer_law,
    schmidt_two_qubit,
    single_layer_peak_law,
)
from .qsim import haar_random_unitaries, StateVector
from .seeds import derive_seed
from . import stats

log = logging.getLogger(__name__)

KINDS = ("rarity", "peak-sweep", "entropy-profile", "scaling-fit", "oracle-check")
TAU_R_RULES = ("n", "n/2")
TAU_P_RULES = ("tau_r/2", "tau_r/3", "tau_r/4")


class ManifestError(ValueError):
    """Invalid manifest; ``fields`` lists the offending keys."""

    def __init__(self, problems: dict[str, str]):
        self.fields = sorted(problems)
        super().__init__("invalid manifest: " + "; ".join(f"{k}: {v}" for k, v in sorted(problems.items())))


class IntegrityError(RuntimeError):
    """A persisted file is corrupt or inconsistent."""

    def __init__(self, path, fieldname: str, detail: str):
        self.path = str(path)
        self.field = fieldname
        super().__init__(f"{path}: field {fieldname!r}: {detail}")


class PartialRun(RuntimeError):
    """The run stopped early; completed rows are on disk and can be resumed."""

    def __init__(self, out: Path, done: int, total: int):
        self.out, self.done, self.total = out, done, total
        super().__init__(f"partial run in {out}: {done}/{total} tasks complete; use `resume`")


# -- manifests -------------------------------------------------------------------

_OPT_FIELDS = {f.name for f in dataclasses.fields(OptimizerConfig)}


@dataclass
class ExperimentManifest:
    kind: str
    n: list[int]
    tau_r: Any = "n"
    tau_p: Any = None
    instances: int = 20
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    out: str = "results"
    parity: str = "continue"
    deltas: list[float] = field(default_factory=lambda: [0.01, 0.04, 0.1])
    extrapolate: list[int] = field(default_factory=list)
    baseline: bool = True
    brute_force_instances: int = 5

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentManifest":
        problems: dict[str, str] = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                problems[key] = "unknown field"
        kind = data.get("kind")
        if kind not in KINDS:
            problems["kind"] = f"must be one of {', '.join(KINDS)}"
        ns = data.get("n")
        if isinstance(ns, int):
            ns = [ns]
        if not isinstance(ns, list) or not ns or not all(isinstance(v, int) and v >= 2 and v % 2 == 0 for v in ns):
            problems["n"] = "must be a non-empty list of even integers >= 2"
            ns = []
        opt = data.get("optimizer", {}) or {}
        cfg = OptimizerConfig()
        if not isinstance(opt, dict) or set(opt) - _OPT_FIELDS:
            problems["optimizer"] = f"must be a mapping with keys among {sorted(_OPT_FIELDS)}"
        else:
            try:
                cfg = OptimizerConfig(**opt)
            except (TypeError, ValueError) as exc:
                problems["optimizer"] = str(exc)
        kwargs = {k: v for k, v in data.items() if k in known and k not in ("n", "optimizer")}
        instances = data.get("instances", 20)
        if not isinstance(instances, int) or instances < 1:
            problems["instances"] = "must be a positive integer"
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            problems["seed"] = "must be a non-negative integer"
        if data.get("parity", "continue") not in ("continue", "mirror"):
            problems["parity"] = "must be 'continue' or 'mirror'"
        tau_r = data.get("tau_r", "n")
        if isinstance(tau_r, bool) or not (isinstance(tau_r, int) or tau_r in TAU_R_RULES):
            problems["tau_r"] = f"must be an integer or one of {TAU_R_RULES}"
        tau_p = data.get("tau_p")
        if not (
            tau_p is None
            or (isinstance(tau_p, int) and not isinstance(tau_p, bool))
            or tau_p in TAU_P_RULES
            or (isinstance(tau_p, list) and tau_p and all(isinstance(v, int) and not isinstance(v, bool) for v in tau_p))
        ):
            problems["tau_p"] = f"must be an integer, a non-empty list of integers, or one of {TAU_P_RULES}"
        if kind in ("peak-sweep", "scaling-fit") and tau_p is None:
            problems["tau_p"] = f"required for {kind}"
        deltas = data.get("deltas", [0.01, 0.04, 0.1])
        if not isinstance(deltas, list) or not all(isinstance(d, (int, float)) and 0 < d <= 1 for d in deltas):
            problems["deltas"] = "must be a list of numbers in (0, 1]"
        if problems:
            raise ManifestError(problems)
        m = cls(n=list(ns), optimizer=cfg, **{k: v for k, v in kwargs.items() if k != "kind"}, kind=kind)
        m.validate()
        return m

    def validate(self) -> None:
        problems: dict[str, str] = {}
        for n in self.n:
            try:
                tau_r = self.resolve_tau_r(n)
            except ValueError as exc:
                problems["tau_r"] = str(exc)
                continue
            if tau_r < 1:
                problems["tau_r"] = f"resolves to {tau_r} for n={n}"
                continue
            if self.kind in ("peak-sweep", "scaling-fit"):
                try:
                    tps = self.resolve_tau_p(tau_r)
                except ValueError as exc:
                    problems["tau_p"] = str(exc)
                    continue
                if not tps or any(t < 1 for t in tps):
                    problems["tau_p"] = f"must resolve to positive integers, got {tps} for n={n}"
            elif self.kind == "entropy-profile" and self.tau_p is not None:
                try:
                    self.resolve_tau_p(tau_r)
                except ValueError as exc:
                    problems["tau_p"] = str(exc)
        if self.kind == "oracle-check" and any(n < 2 for n in self.n):
            problems["n"] = "oracle checks need n >= 2"
        if problems:
            raise ManifestError(problems)

    def resolve_tau_r(self, n: int) -> int:
        rule = self.tau_r
        if isinstance(rule, bool):
            raise ValueError(f"bad tau_r rule {rule!r}")
        if isinstance(rule, int):
            return rule
        if rule == "n":
            return n
        if rule == "n/2":
            return n // 2
        raise ValueError(f"tau_r must be an integer or one of {TAU_R_RULES}, got {rule!r}")

    def resolve_tau_p(self, tau_r: int) -> list[int]:
        rule = self.tau_p
        if rule is None:
            return [0]
        if isinstance(rule, bool):
            raise ValueError(f"bad tau_p rule {rule!r}")
        if isinstance(rule, int):
            return [rule]
        if isinstance(rule, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in rule):
            return list(rule)
        if rule in TAU_P_RULES:
            return [max(1, tau_r // int(rule.split("/")[1]))]
        raise ValueError(f"tau_p must be an integer, a list, or one of {TAU_P_RULES}, got {rule!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["optimizer"] = dataclasses.asdict(self.optimizer)
        return d

    def manifest_hash(self) -> str:
        """SHA-256 of the canonical manifest; the output location is not part of its identity."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(_canonical(d).encode()).hexdigest()


def read_manifest_data(path) -> dict:
    """Raw manifest mapping from a YAML (or JSON) file."""
    import yaml

    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ManifestError({"<file>": f"cannot read {path}: {exc.strerror}"}) from exc
    except yaml.YAMLError as exc:
        raise ManifestError({"<file>": f"{path} is not valid YAML: {exc}"}) from exc
    if not isinstance(data, dict):
        raise ManifestError({"<file>": f"{path} does not hold a mapping"})
    return data


def load_manifest(path) -> ExperimentManifest:
    return ExperimentManifest.from_dict(read_manifest_data(path))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# -- rows --------------------------------------------------------------------------

COLUMNS = (
    ("task", str),
    ("n", int),
    ("tau_r", int),
    ("tau_p", int),
    ("index", int),
    ("seed", int),
    ("delta", float),
    ("pi", float),
    ("max_peak", float),
    ("p0", float),
    ("iterations", int),
    ("converged", int),
    ("wall_time", float),
    ("extra", list),
)
TIMING_COLUMNS = ("wall_time",)


def _fmt(value, kind) -> str:
    if kind is float:
        return float(value).hex()
    if kind is list:
        return ";".join(float(v).hex() for v in value)
    return str(value)


def _parse(text: str, kind):
    if kind is float:
        return float.fromhex(text)
    if kind is int:
        return int(text)
    if kind is list:
        return [float.fromhex(v) for v in text.split(";")] if text else []
    return text


def format_row(row: dict) -> str:
    body = "\t".join(_fmt(row[name], kind) for name, kind in COLUMNS)
    return f"{body}\t{zlib.crc32(body.encode()):08x}"


def parse_row(line: str, path, lineno: int) -> dict:
    body, _, crc = line.rstrip("\n").rpartition("\t")
    if not body or f"{zlib.crc32(body.encode()):08x}" != crc:
        raise IntegrityError(path, f"line {lineno}", "checksum mismatch (truncated or edited row)")
    parts = body.split("\t")
    if len(parts) != len(COLUMNS):
        raise IntegrityError(path, f"line {lineno}", f"expected {len(COLUMNS)} columns, got {len(parts)}")
    row = {}
    for (name, kind), text in zip(COLUMNS, parts):
        try:
            row[name] = _parse(text, kind)
        except ValueError as exc:
            raise IntegrityError(path, name, f"line {lineno}: {exc}") from exc
    return row


def row_key(row: dict) -> tuple:
    return (row["task"], row["n"], row["tau_r"], row["tau_p"], row["index"])


def read_rows(path: Path, tolerate_torn_tail: bool = False) -> list[dict]:
    """Parse ``rows.tsv``; a torn final line is dropped only when tolerated."""
    if not path.exists():
        return []
    text = path.read_text()
    lines = text.split("\n")
    header, body = lines[0], lines[1:]
    if header != "\t".join(name for name, _ in COLUMNS) + "\tcrc32":
        raise IntegrityError(path, "header", "unexpected column layout")
    if body and body[-1] == "":
        body = body[:-1]
        torn = False
    else:
        torn = bool(body)
    rows = []
    for i, line in enumerate(body, start=2):
        last = i == len(body) + 1
        try:
            rows.append(parse_row(line, path, i))
        except IntegrityError:
            if last and tolerate_torn_tail:
                break
            raise
    if torn and not tolerate_torn_tail and rows and len(rows) == len(body):
        raise IntegrityError(path, f"line {len(body) + 1}", "missing trailing newline")
    return rows


# -- tasks --------------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    task: str
    n: int
    tau_r: int
    tau_p: int
    index: int
    seed: int

    @property
    def key(self) -> tuple:
        return (self.task, self.n, self.tau_r, self.tau_p, self.index)


def plan_tasks(m: ExperimentManifest) -> list[Task]:
    seeds = [derive_seed(m.seed, i) for i in range(m.instances)]
    tasks: list[Task] = []
    for n in m.n:
        tau_r = m.resolve_tau_r(n)
        if m.kind == "rarity":
            tasks += [Task("rarity", n, tau_r, 0, i, s) for i, s in enumerate(seeds)]
        elif m.kind == "entropy-profile":
            tp = m.resolve_tau_p(tau_r)[0]
            tasks += [Task("entropy", n, tau_r, tp, i, s) for i, s in enumerate(seeds)]
        elif m.kind in ("peak-sweep", "scaling-fit"):
            for tp in m.resolve_tau_p(tau_r):
                tasks += [Task("optimize", n, tau_r, tp, i, s) for i, s in enumerate(seeds)]
                if m.kind == "scaling-fit" and m.baseline and tau_r - tp >= 1:
                    tasks += [Task("baseline", n, tau_r - tp, 0, i, s) for i, s in enumerate(seeds)]
        elif m.kind == "oracle-check":
            tasks += [Task("two-layer", n, 2, 1, i, s) for i, s in enumerate(seeds)]
    if m.kind == "oracle-check":
        tasks += [Task("brute-force", 4, 2, 1, i, s) for i, s in enumerate(seeds[: m.brute_force_instances])]
    return tasks


def _base_row(t: Task) -> dict:
    return {
        "task": t.task, "n": t.n, "tau_r": t.tau_r, "tau_p": t.tau_p, "index": t.index, "seed": t.seed,
        "delta": 0.0, "pi": 0.0, "max_peak": 0.0, "p0": 0.0, "iterations": 0, "converged": 0,
        "wall_time": 0.0, "extra": [],
    }


def _state_summary(row: dict, state: StateVector) -> None:
    probs = state.probabilities()
    row["pi"] = float(np.dot(probs, probs))
    row["max_peak"] = float(probs.max())
    row["p0"] = float(probs[0])


def execute_task(t: Task, kind: str, optimizer: OptimizerConfig, parity: str) -> dict:
    """Run one task; pure function of its arguments apart from ``wall_time``."""
    start = time.perf_counter()
    row = _base_row(t)
    if t.task in ("rarity", "baseline"):
        inst = sample_random_circuit(t.n, t.tau_r, t.seed)
        _state_summary(row, run(inst))
        row["delta"] = row["max_peak"]
    elif t.task == "optimize":
        inst = sample_random_circuit(t.n, t.tau_r, t.seed)
        res = optimize_peaking(inst, t.tau_p, optimizer, seed=t.seed, parity=parity, keep_traces=False)
        _state_summary(row, run(res.instance, res.best_theta))
        row["delta"] = res.best_delta
        row["iterations"] = res.iterations
        row["converged"] = sum(r.converged for r in res.per_restart)
    elif t.task == "entropy":
        inst = sample_random_circuit(t.n, t.tau_r, t.seed)
        if t.tau_p:
            res = optimize_peaking(inst, t.tau_p, optimizer, seed=t.seed, parity=parity, keep_traces=False)
            inst = with_params(res.instance, res.best_theta)
            row["iterations"] = res.iterations
        state = run(inst)
        _state_summary(row, state)
        row["delta"] = row["p0"]
        row["extra"] = list(stats.entropy_profile(inst).entropy)
    elif t.task == "two-layer":
        row.update(_two_layer_row(t))
    elif t.task == "brute-force":
        inst = sample_random_circuit(t.n, t.tau_r, t.seed)
        res = optimize_peaking(inst, t.tau_p, optimizer, seed=t.seed, parity=parity, keep_traces=False)
        brute = brute_force_max_peak(inst, t.tau_p, seed=t.seed, parity=parity)
        row["delta"] = res.best_delta
        row["iterations"] = res.iterations
        row["extra"] = [brute]
    else:  # pragma: no cover - plan_tasks only emits the names above
        raise ValueError(f"unknown task {t.task!r}")
    row["wall_time"] = time.perf_counter() - start
    return row


def _two_layer_row(t: Task) -> dict:
    """Single-layer peak, two-layer construction peak and its prediction, one Haar pair state."""
    single = sample_random_circuit(t.n, 1, t.seed)
    two = sample_random_circuit(t.n, 2, derive_seed(t.seed, 1))
    layer = analytic_peaking_for(two)
    peaked = StateVector(t.n, layer.apply(two.random_state))
    pair = haar_random_unitaries(np.random.default_rng(derive_seed(t.seed, 2)), 1)[0][:, 0]
    sf = schmidt_two_qubit(pair)
    recon = float(np.max(np.abs(sf.state() - pair)))
    _, pw = max_peak(peaked)
    return {
        "delta": pw.value,
        "max_peak": float(run(single).probabilities().max()),
        "p0": layer.predicted_peak,
        "pi": float(np.dot(peaked.probabilities(), peaked.probabilities())),
        "extra": [sf.alpha ** 2, recon, float(layer.brickwall_parity() is not None)],
    }


# -- records --------------------------------------------------------------------------

@dataclass
class ResultRecord:
    manifest: dict
    manifest_hash: str
    rows: list[dict]
    aggregates: dict
    version: str
    timestamp: str
    status: str = "complete"

    def deterministic_rows(self) -> list[dict]:
        return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in self.rows]

    def equivalent(self, other: "ResultRecord") -> bool:
        """Same experiment and results, ignoring timing and timestamps."""
        return (
            self.manifest_hash == other.manifest_hash
            and self.deterministic_rows() == other.deterministic_rows()
            and _canonical(_encode(self.aggregates)) == _canonical(_encode(other.aggregates))
        )


_HEX_FLOAT = re.compile(r"^-?(0x[0-9a-f]+(\.[0-9a-f]*)?p[+-]\d+|inf|nan)$")


def _encode(obj):
    if isinstance(obj, float):
        return obj.hex()
    if isinstance(obj, np.floating):
        return float(obj).hex()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if isinstance(obj, str) and _HEX_FLOAT.match(obj):
        return float.fromhex(obj)
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def _rows_digest(rows: list[dict]) -> str:
    h = hashlib.sha256()
    for r in rows:
        h.update(format_row(r).encode() + b"\n")
    return h.hexdigest()


def persist(record: ResultRecord, out) -> Path:
    """Write ``rows.tsv`` and ``record.json``; floats are stored as exact hex strings."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "rows.tsv", record.rows)
    body = {
        "manifest": record.manifest,
        "manifest_hash": record.manifest_hash,
        "aggregates": _encode(record.aggregates),
        "version": record.version,
        "timestamp": record.timestamp,
        "status": record.status,
        "row_count": len(record.rows),
        "rows_sha256": _rows_digest(record.rows),
    }
    body["checksum"] = hashlib.sha256(_canonical(body).encode()).hexdigest()
    tmp = out / "record.json.tmp"
    tmp.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    tmp.replace(out / "record.json")
    return out / "record.json"


def _write_rows(path: Path, rows: list[dict]) -> None:
    lines = ["\t".join(name for name, _ in COLUMNS) + "\tcrc32"] + [format_row(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def load(out) -> ResultRecord:
    out = Path(out)
    path = out / "record.json"
    try:
        body = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise IntegrityError(path, "<file>", "missing") from exc
    except json.JSONDecodeError as exc:
        raise IntegrityError(path, "<json>", f"not valid JSON ({exc.msg} at char {exc.pos})") from exc
    required = ("manifest", "manifest_hash", "aggregates", "version", "timestamp", "status",
                "row_count", "rows_sha256", "checksum")
    for key in required:
        if key not in body:
            raise IntegrityError(path, key, "missing")
    checksum = body.pop("checksum")
    if hashlib.sha256(_canonical(body).encode()).hexdigest() != checksum:
        raise IntegrityError(path, "checksum", "record contents do not match their checksum")
    try:
        manifest = ExperimentManifest.from_dict(body["manifest"])
    except ManifestError as exc:
        raise IntegrityError(path, "manifest", str(exc)) from exc
    if manifest.manifest_hash() != body["manifest_hash"]:
        raise IntegrityError(path, "manifest_hash", "does not match the stored manifest")
    rows = read_rows(out / "rows.tsv")
    if len(rows) != body["row_count"]:
        raise IntegrityError(out / "rows.tsv", "row_count", f"expected {body['row_count']} rows, found {len(rows)}")
    if _rows_digest(rows) != body["rows_sha256"]:
        raise IntegrityError(out / "rows.tsv", "rows_sha256", "rows differ from the recorded digest")
    return ResultRecord(body["manifest"], body["manifest_hash"], rows, _decode(body["aggregates"]),
                        body["version"], body["timestamp"], body["status"])


# -- aggregation ------------------------------------------------------------------------

def _group(rows, task):
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["task"] == task:
            groups.setdefault((r["n"], r["tau_r"], r["tau_p"]), []).append(r)
    return {k: sorted(v, key=lambda r: r["index"]) for k, v in sorted(groups.items())}


def _ensemble(n, rows, delta_key="delta") -> stats.EnsembleStats:
    return stats.ensemble_stats(
        n, [stats.InstanceRecord(r[delta_key], r["pi"], r["max_peak"]) for r in rows]
    )


def _point_summary(key, ens: stats.EnsembleStats) -> dict:
    n, tau_r, tau_p = key
    return {
        "n": n, "tau_r": tau_r, "tau_p": tau_p, "count": ens.count,
        "mean_delta": ens.mean_delta, "var_delta": ens.var_delta, "stderr_delta": ens.stderr_delta,
        "max_delta": ens.max_delta, "mean_pi": ens.mean_pi, "gamma_hat": ens.gamma_hat,
        "max_peak": float(ens.max_peaks.max()),
    }


def _rarity_block(ens: stats.EnsembleStats, deltas) -> list[dict]:
    out = []
    for d in deltas:
        est = stats.rarity_estimate(ens, d)
        bound = stats.collision_bound(ens.gamma_hat, d, ens.n)
        out.append({
            "delta": float(d), "count": est.count, "total": est.total, "p_hat": est.p_hat,
            "ci_low": est.ci_low, "ci_high": est.ci_high, "bound": bound,
            "consistent": stats.rarity_consistent(ens, d),
        })
    return out


def _spearman(x, y) -> float:
    from scipy.stats import spearmanr

    if len(x) < 2:
        return float("nan")
    return float(spearmanr(x, y).statistic)


def aggregate(m: ExperimentManifest, rows: list[dict]) -> dict:
    agg: dict[str, Any] = {"kind": m.kind, "points": []}
    if m.kind in ("rarity", "peak-sweep", "scaling-fit"):
        task = "rarity" if m.kind == "rarity" else "optimize"
        for key, grp in _group(rows, task).items():
            ens = _ensemble(key[0], grp)
            point = _point_summary(key, ens)
            point["rarity"] = _rarity_block(ens, m.deltas)
            agg["points"].append(point)
    if m.kind == "peak-sweep":
        agg["trend"] = []
        for n in m.n:
            pts = [p for p in agg["points"] if p["n"] == n]
            xs, ys = [p["tau_p"] for p in pts], [p["mean_delta"] for p in pts]
            agg["trend"].append({
                "n": n, "spearman": _spearman(xs, ys),
                "strictly_increasing": bool(all(b > a for a, b in zip(ys, ys[1:]))),
            })
    if m.kind == "scaling-fit":
        baselines = {k: _ensemble(k[0], g) for k, g in _group(rows, "baseline").items()}
        agg["baseline"] = [_point_summary(k, e) for k, e in baselines.items()]
        fits = {}
        series = [(p["n"], p["mean_delta"]) for p in agg["points"]]
        if len(series) >= 3 and all(v > 0 for _, v in series):
            fit = stats.fit_exponential_decay(series)
            fits = {"c": fit.c, "a": fit.a, "residuals": list(fit.residuals)}
            fits["extrapolation"] = [
                {"n": int(x), "predicted_delta": float(fit(x)), "label": "EXTRAPOLATION"} for x in m.extrapolate
            ]
        agg["fit"] = fits or None
        alphas = []
        for p in agg["points"]:
            base = baselines.get((p["n"], p["tau_r"] - p["tau_p"], 0))
            if base is not None and 0 < base.mean_delta < 1 and 0 < p["mean_delta"] < 1:
                alphas.append({"n": p["n"], "alpha": stats.improvement_exponent(p["mean_delta"], base.mean_delta)})
        agg["improvement_exponent"] = alphas
    if m.kind == "entropy-profile":
        for key, grp in _group(rows, "entropy").items():
            prof = np.array([r["extra"] for r in grp])
            ens = _ensemble(key[0], grp)
            point = _point_summary(key, ens)
            point["depth"] = list(range(prof.shape[1]))
            point["entropy_mean"] = list(prof.mean(axis=0))
            point["entropy_stderr"] = list(prof.std(axis=0, ddof=1) / math.sqrt(len(grp))) if len(grp) > 1 else [0.0] * prof.shape[1]
            point["page"] = stats.page_entropy(key[0])
            agg["points"].append(point)
    if m.kind == "oracle-check":
        agg["checks"] = oracle_checks(rows)
    return agg


def _within(mean, stderr, expected, k=3.0) -> bool:
    return abs(mean - expected) <= k * stderr


def oracle_checks(rows: list[dict]) -> list[dict]:
    checks = []
    for (n, _, _), grp in _group(rows, "two-layer").items():
        single = np.array([r["max_peak"] for r in grp])
        peaked = np.array([r["delta"] for r in grp])
        predicted = np.array([r["p0"] for r in grp])
        alpha2 = np.array([r["extra"][0] for r in grp])
        recon = max(r["extra"][1] for r in grp)
        se = lambda v: float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("inf")  # noqa: E731
        checks += [
            {"name": "single-layer law", "n": n, "measured": float(single.mean()), "stderr": se(single),
             "expected": single_layer_peak_law(n), "passed": _within(single.mean(), se(single), single_layer_peak_law(n))},
            {"name": "peaking-layer law", "n": n, "measured": float(peaked.mean()), "stderr": se(peaked),
             "expected": peaking_layer_law(n), "passed": _within(peaked.mean(), se(peaked), peaking_layer_law(n))},
            {"name": "peak equals Schmidt product", "n": n, "measured": float(np.max(np.abs(peaked - predicted))),
             "expected": 0.0, "passed": bool(np.max(np.abs(peaked - predicted)) <= 1e-9)},
            {"name": "peaking never hurts on average", "n": n, "measured": float(peaked.mean() - single.mean()),
             "expected": 0.0, "passed": bool(peaked.mean() >= single.mean())},
            {"name": "mean max Schmidt weight", "n": n, "measured": float(alpha2.mean()), "stderr": se(alpha2),
             "expected": MEAN_MAX_SCHMIDT_WEIGHT, "passed": _within(alpha2.mean(), se(alpha2), MEAN_MAX_SCHMIDT_WEIGHT)},
            {"name": "Schmidt reconstruction", "n": n, "measured": recon, "expected": 0.0, "passed": recon <= 1e-9},
        ]
    brute = [r for r in rows if r["task"] == "brute-force"]
    if brute:
        ratios = [r["delta"] / r["extra"][0] for r in brute]
        checks.append({"name": "optimizer reaches 95% of brute force", "n": 4, "measured": float(min(ratios)),
                       "expected": 0.95, "passed": bool(min(ratios) >= 0.95)})
    return checks


# -- driver -----------------------------------------------------------------------------

def _iter_results(tasks, m: ExperimentManifest, workers: int) -> Iterator[dict]:
    if workers <= 1:
        for t in tasks:
            yield execute_task(t, m.kind, m.optimizer, m.parity)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        pending = set()
        it = iter(tasks)
        for t in it:
            pending.add(pool.submit(execute_task, t, m.kind, m.optimizer, m.parity))
            if len(pending) >= 2 * workers:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for f in done:
                    yield f.result()
        for f in pending:
            yield f.result()


def run_experiment(
    m: ExperimentManifest,
    out=None,
    workers: int = 1,
    stop_after: int | None = None,
    figures: bool = False,
) -> ResultRecord:
    """Run (or resume) ``m`` into ``out``; returns the completed record.

    Rows already present in ``out`` for the same manifest are skipped, so an
    interrupted run continues where it stopped.  Raises :class:`PartialRun`
    after ``stop_after`` new tasks or on interruption, leaving a ``PARTIAL``
    marker behind.
    """
    out = Path(out or m.out)
    out.mkdir(parents=True, exist_ok=True)
    mhash = m.manifest_hash()
    mpath = out / "manifest.json"
    if mpath.exists():
        try:
            stored = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise IntegrityError(mpath, "<json>", str(exc)) from exc
        if stored.get("hash") != mhash:
            raise ManifestError({"out": f"{out} already holds a different experiment"})
    else:
        mpath.write_text(json.dumps({"hash": mhash, "manifest": m.to_dict()}, indent=1, sort_keys=True) + "\n")

    rows_path = out / "rows.tsv"
    done_rows = read_rows(rows_path, tolerate_torn_tail=True)
    _write_rows(rows_path, done_rows)  # rewrite to drop a torn tail
    finished = {row_key(r) for r in done_rows}
    tasks = plan_tasks(m)
    todo = [t for t in tasks if t.key not in finished]
    marker = out / "PARTIAL"
    marker.write_text(f"{mhash}\n{len(done_rows)}/{len(tasks)}\n")
    log.info("%s: %d tasks, %d already done", m.kind, len(tasks), len(done_rows))

    new = 0
    try:
        with rows_path.open("a") as fh:
            for row in _iter_results(todo if stop_after is None else todo[:stop_after], m, workers):
                fh.write(format_row(row) + "\n")
                fh.flush()
                done_rows.append(row)
                new += 1
    except (KeyboardInterrupt, MemoryError) as exc:
        marker.write_text(f"{mhash}\n{len(done_rows)}/{len(tasks)}\n")
        raise PartialRun(out, len(done_rows), len(tasks)) from exc
    if len(done_rows) < len(tasks):
        marker.write_text(f"{mhash}\n{len(done_rows)}/{len(tasks)}\n")
        raise PartialRun(out, len(done_rows), len(tasks))

    order = {t.key: i for i, t in enumerate(tasks)}
    rows = sorted(done_rows, key=lambda r: order[row_key(r)])
    record = ResultRecord(
        manifest=m.to_dict(),
        manifest_hash=mhash,
        rows=rows,
        aggregates=aggregate(m, rows),
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    persist(record, out)
    write_plot_data(record, out)
    if figures:
        from .plotting import render_figures

        render_figures(record, out)
    marker.unlink(missing_ok=True)
    return record


# -- plot data ----------------------------------------------------------------------------

def _write_xye(path: Path, header: str, xs, ys, es) -> None:
    lines = [f"# {header}", "x\ty\terr"]
    lines += [f"{x!r}\t{float(y)!r}\t{float(e)!r}" for x, y, e in zip(xs, ys, es)]
    path.write_text("\n".join(lines) + "\n")


def write_plot_data(record: ResultRecord, out) -> list[Path]:
    out = Path(out)
    agg = record.aggregates
    kind = agg["kind"]
    paths = []
    if kind == "rarity":
        for p in agg["points"]:
            path = out / f"plot_rarity_n{p['n']}.tsv"
            r = p["rarity"]
            _write_xye(path, f"empirical P(max peak >= delta), n={p['n']}, tau_r={p['tau_r']}; err = upper 95% Wilson",
                       [b["delta"] for b in r], [b["p_hat"] for b in r], [b["ci_high"] - b["p_hat"] for b in r])
            paths.append(path)
            path = out / f"plot_rarity_bound_n{p['n']}.tsv"
            _write_xye(path, f"collision bound gamma_hat/(delta^2 2^n), n={p['n']}",
                       [b["delta"] for b in r], [b["bound"] for b in r], [0.0] * len(r))
            paths.append(path)
    elif kind == "peak-sweep":
        for n in sorted({p["n"] for p in agg["points"]}):
            pts = [p for p in agg["points"] if p["n"] == n]
            path = out / f"plot_peak_sweep_n{n}.tsv"
            _write_xye(path, f"mean best peak weight vs tau_p, n={n}, tau_r={pts[0]['tau_r']}",
                       [p["tau_p"] for p in pts], [p["mean_delta"] for p in pts], [p["stderr_delta"] for p in pts])
            paths.append(path)
    elif kind == "scaling-fit":
        pts = agg["points"]
        path = out / "plot_scaling.tsv"
        _write_xye(path, "mean best peak weight vs n", [p["n"] for p in pts], [p["mean_delta"] for p in pts],
                   [p["stderr_delta"] for p in pts])
        paths.append(path)
        if agg.get("baseline"):
            path = out / "plot_scaling_baseline.tsv"
            b = agg["baseline"]
            _write_xye(path, "mean max peak of unpeaked depth tau_r - tau_p circuits", [p["n"] for p in b],
                       [p["mean_delta"] for p in b], [p["stderr_delta"] for p in b])
            paths.append(path)
        if agg.get("fit"):
            fit = agg["fit"]
            ns = [p["n"] for p in pts] + [e["n"] for e in fit["extrapolation"]]
            path = out / "plot_scaling_fit.tsv"
            _write_xye(path, f"fit c*a^-n with c={fit['c']!r} a={fit['a']!r} (n beyond data is EXTRAPOLATION)",
                       ns, [fit["c"] * fit["a"] ** (-x) for x in ns], [0.0] * len(ns))
            paths.append(path)
    elif kind == "entropy-profile":
        for p in agg["points"]:
            path = out / f"plot_entropy_n{p['n']}.tsv"
            _write_xye(path, f"half-chain entropy (bits) vs depth, n={p['n']}, tau_r={p['tau_r']}, "
                             f"tau_p={p['tau_p']}, Page value {p['page']!r}",
                       p["depth"], p["entropy_mean"], p["entropy_stderr"])
            paths.append(path)
    elif kind == "oracle-check":
        for name in ("single-layer law", "peaking-layer law"):
            cs = [c for c in agg["checks"] if c["name"] == name]
            slug = name.split()[0]
            path = out / f"plot_oracle_{slug}.tsv"
            _write_xye(path, f"{name}: measured mean vs n (expected values in record.json)",
                       [c["n"] for c in cs], [c["measured"] for c in cs], [c["stderr"] for c in cs])
            paths.append(path)
    return paths
