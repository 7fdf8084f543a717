"""Experiment configs, execution and CSV persistence.

Config files are JSON documents.  Validation is strict: unknown keys are
rejected and every problem is reported with its key path.  Physical
parameters have no defaults; numerical knobs do.

Every experiment writes ``<id>_<metric>.csv`` data files with the columns
``experiment,realization,step,metric,K,value,stderr,n_samples``.  For
sweep experiments the ``step`` column holds the sweep coordinate (ancilla
size for dt/mi-dt/tradeoff/qsize) and ``K`` is 0 for metrics without an
order.  Oracle predictions go to ``<id>_oracle.csv`` in the same layout
with realization -1, and joined comparisons to ``<id>_compare.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np

from . import permutations as perm
from . import theory
from .metrics import frame_potential, frame_potential_mc_multi, pop_collect, pt_chi2
from .protocols import ProtocolConfig, ResourceCapError, UnitarySource, run_dt, run_hdt, run_hdt_sampled
from .security import dt_mi_sweep, mi_sweep

KINDS = ("dt", "hdt", "pop", "mi", "tradeoff", "qsize", "oracle", "train", "statmodel")
COLUMNS = ("experiment", "realization", "step", "metric", "K", "value", "stderr", "n_samples")
Z_PASS = 3.0
PASS_FRACTION = 0.95
SIGMA_FLOOR = 1e-12


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# schema


@dataclass(frozen=True)
class F:
    """One schema field: accepted types, required flag, default and range check."""

    types: tuple
    required: bool = True
    default: Any = None
    check: Optional[Callable[[Any], Optional[str]]] = None
    items: Optional[tuple] = None
    section: Optional[dict] = None


def _pos(x):
    return None if x >= 1 else "must be >= 1"


def _nonneg(x):
    return None if x >= 0 else "must be >= 0"


def _unit(x):
    return None if 0 < x <= 1 else "must lie in (0, 1]"


def _one_of(*opts):
    return lambda x: None if x in opts else f"must be one of {list(opts)}"


def _nonempty(check=None):
    def f(xs):
        if len(xs) == 0:
            return "must be a nonempty list"
        if check:
            for x in xs:
                msg = check(x)
                if msg:
                    return f"entry {x!r} {msg}"
        return None

    return f


INT = (int,)
NUM = (int, float)
STR = (str,)
LIST = (list,)

SOURCE = {
    "kind": F(STR, check=_one_of("haar", "hea")),
    "layers": F(INT, False, 0, _nonneg),
}

PROTOCOL = {
    "n_data": F(INT, check=_pos),
    "n_ancilla": F(INT, False, None, _nonneg),
    "steps": F(INT, False, None, _pos),
    "mode": F(STR, False, "mc", _one_of("exact", "mc")),
    "shots": F(INT, False, 50000, _pos),
    "realizations": F(INT, False, 1, _pos),
    "source": F((dict,), False, None, section=SOURCE),
    "cap_measured": F(INT, False, 16, _pos),
    "cap_dense": F(INT, False, 14, _pos),
}

SWEEP = {
    "n_ancilla": F(LIST, False, None, _nonempty(_nonneg), items=INT),
    "n_data": F(LIST, False, None, _nonempty(_pos), items=INT),
}

METRICS = {
    "frame_potential": F(LIST, False, [1], _nonempty(_pos), items=INT),
}

OPTIONS = {
    "pop": {
        "bins": F(INT, False, 50, _pos),
        "reference": F(STR, False, "zero", _one_of("zero", "basis")),
    },
    "mi": {
        "protocol": F(STR, False, "hdt", _one_of("hdt", "dt")),
        "mc_threshold": F(INT, False, 8, _nonneg),
        "mc_histories": F(INT, False, 20000, _pos),
    },
    "theory": {
        "n_data": F(INT, False, None, _pos),
        "n_ancilla": F(INT, False, None, _pos),
        "steps": F(INT, False, None, _pos),
        "K": F(LIST, False, None, _nonempty(_pos), items=INT),
        "epsilon": F(NUM, False, None, _unit),
    },
    "train": {
        "shots": F(INT, False, 4096, _pos),
        "eval_shots": F(INT, False, 50000, _pos),
        "learning_rate": F(NUM, False, 0.05, lambda x: None if x > 0 else "must be > 0"),
        "max_iters": F(INT, False, 500, _pos),
        "layers": F(INT, False, 0, _nonneg),
    },
    "statmodel": {
        "n": F(INT, check=_nonneg),
        "K": F(INT, check=_pos),
        "d_A": F(INT, check=lambda x: None if x >= 2 else "must be >= 2"),
        "d_B": F(INT, check=lambda x: None if x >= 2 else "must be >= 2"),
        "steps": F(LIST, check=_nonempty(_pos), items=INT),
        "methods": F(LIST, False, ["exact", "approx", "1dw"],
                     _nonempty(_one_of("exact", "approx", "1dw", "enumerated")), items=STR),
    },
}

TOP = {
    "experiment": F(STR, False, None, _one_of(*KINDS)),
    "id": F(STR, False, None),
    "master_seed": F(INT, False, 0, _nonneg),
    "output": F(STR, False, None),
    "protocol": F((dict,), False, None, section=PROTOCOL),
    "sweep": F((dict,), False, None, section=SWEEP),
    "metrics": F((dict,), False, None, section=METRICS),
    **{k: F((dict,), False, None, section=v) for k, v in OPTIONS.items()},
}

# sections each kind needs, plus keys inside them that become mandatory
REQUIRED = {
    "dt": {"protocol": ["n_data"], "sweep": ["n_ancilla"]},
    "hdt": {"protocol": ["n_data", "n_ancilla", "steps"]},
    "pop": {"protocol": ["n_data", "n_ancilla", "steps"]},
    "mi": {"protocol": ["n_data"]},
    "tradeoff": {"theory": ["n_data", "K", "epsilon"], "sweep": ["n_ancilla"]},
    "qsize": {"theory": ["K", "epsilon"], "sweep": ["n_data", "n_ancilla"]},
    "oracle": {"theory": ["n_data", "n_ancilla", "steps", "K"]},
    "train": {"protocol": ["n_data", "n_ancilla", "steps"]},
    "statmodel": {"statmodel": []},
}


def _validate(obj: dict, schema: dict, path: str, errors: list) -> dict:
    out = {}
    for key in obj:
        if key not in schema:
            errors.append(f"{path}{key}: unknown key")
    for key, f in schema.items():
        p = f"{path}{key}"
        if key not in obj:
            if f.required:
                errors.append(f"{p}: missing required key")
            out[key] = f.default
            continue
        val = obj[key]
        if isinstance(val, bool) or not isinstance(val, f.types):
            errors.append(f"{p}: expected {'/'.join(t.__name__ for t in f.types)}, got {type(val).__name__}")
            continue
        if f.section is not None:
            out[key] = _validate(val, f.section, p + ".", errors)
            continue
        if f.items is not None:
            bad = [i for i, x in enumerate(val) if isinstance(x, bool) or not isinstance(x, f.items)]
            if bad:
                errors.append(f"{p}[{bad[0]}]: expected {f.items[0].__name__}")
                continue
        if f.check is not None:
            msg = f.check(val)
            if msg:
                errors.append(f"{p}: {msg}")
                continue
        out[key] = val
    return out


@dataclass
class ExperimentConfig:
    kind: str
    id: str
    master_seed: int
    protocol: Optional[dict] = None
    sweep: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: Optional[str] = None

    def protocol_config(self, n_ancilla: Optional[int] = None, steps: Optional[int] = None,
                        cap_dense: Optional[int] = None) -> ProtocolConfig:
        p = self.protocol
        src = p.get("source") or {"kind": "haar", "layers": 0}
        nb = p["n_ancilla"] if n_ancilla is None else n_ancilla
        st = p["steps"] if steps is None else steps
        return ProtocolConfig(
            p["n_data"], nb, st, UnitarySource(src["kind"], self.master_seed, src.get("layers") or 0),
            mode=p["mode"], shots=p["shots"] if p["mode"] == "mc" else 0, realizations=p["realizations"],
            seed=self.master_seed, cap_measured=p["cap_measured"],
            cap_dense=p["cap_dense"] if cap_dense is None else cap_dense,
        )


def parse_config(text: str, kind: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Validate a JSON config; raises ConfigError listing every problem."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: invalid JSON ({exc.msg} at line {exc.lineno})"]) from None
    if not isinstance(obj, dict):
        raise ConfigError(["<root>: expected an object"])
    errors: list[str] = []
    v = _validate(obj, TOP, "", errors)
    k = v.get("experiment")
    if kind is not None:
        if k is not None and k != kind:
            errors.append(f"experiment: config says {k!r} but the command is {kind!r}")
        k = kind
    if k is None and "experiment" not in [e.split(":")[0] for e in errors]:
        errors.append("experiment: missing required key")
    if k in REQUIRED:
        for sec, keys in REQUIRED[k].items():
            if sec not in obj:
                errors.append(f"{sec}: missing required section for {k!r}")
                continue
            if not isinstance(obj[sec], dict):
                continue
            for key in keys:
                if key not in obj[sec] and f"{sec}.{key}: missing required key" not in errors:
                    errors.append(f"{sec}.{key}: missing required key for {k!r}")
        if k == "mi" and isinstance(obj.get("protocol"), dict):
            mode = (obj.get("mi") or {}).get("protocol", "hdt")
            need = ["n_ancilla", "steps"] if mode == "hdt" else []
            for key in need:
                if key not in obj["protocol"]:
                    errors.append(f"protocol.{key}: missing required key for mi/{mode}")
            if mode == "dt" and "n_ancilla" not in (obj.get("sweep") or {}):
                errors.append("sweep.n_ancilla: missing required key for mi/dt")
    src = (v.get("protocol") or {}).get("source") or {}
    if src.get("kind") == "hea" and not src.get("layers"):
        errors.append("protocol.source.layers: must be >= 1 for an hea source")
    if errors:
        raise ConfigError(errors)
    options = v.get(k) if k in OPTIONS else None
    if k in ("tradeoff", "qsize", "oracle"):
        options = v["theory"]
    if options is None and k in OPTIONS:
        options = _validate({}, OPTIONS[k], f"{k}.", [])
    return ExperimentConfig(
        kind=k,
        id=v.get("id") or k,
        master_seed=v["master_seed"] if seed is None else seed,
        protocol=v.get("protocol"),
        sweep=v.get("sweep") or {},
        metrics=v.get("metrics") or {"frame_potential": [1]},
        options=options or {},
        output=v.get("output"),
    )


# results


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    realization: int
    step: int
    metric: str
    K: int
    value: float
    stderr: float
    n_samples: int

    def cells(self) -> list[str]:
        return [self.experiment, str(self.realization), str(self.step), self.metric, str(self.K),
                repr(float(self.value)), repr(float(self.stderr)), str(self.n_samples)]


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def read_rows(path_or_text: str) -> list[ResultRow]:
    """Parse result rows from CSV text, or from a file when given an existing path."""
    text = path_or_text
    if "\n" not in path_or_text and os.path.exists(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    rd = csv.reader(io.StringIO(text))
    header = next(rd, None)
    if header is None or tuple(header) != COLUMNS:
        raise ValueError(f"bad CSV header {header!r}")
    return [ResultRow(a, int(b), int(c), d, int(e), float(f), float(g), int(h)) for a, b, c, d, e, f, g, h in rd]


def atomic_write(path: str, text: str) -> None:
    """Write to a temporary file in the same directory and rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def aggregate(rows: list[ResultRow]) -> list[ResultRow]:
    """Mean over realizations per (experiment, step, metric, K).

    stderr is the standard error over realizations, or the single row's own
    stderr when only one realization is present.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.experiment, r.step, r.metric, r.K), []).append(r)
    out = []
    for (e, s, m, k), rs in groups.items():
        vals = np.array([r.value for r in rs])
        if len(rs) == 1:
            se = rs[0].stderr
        else:
            se = float(vals.std(ddof=1) / math.sqrt(len(rs)))
        out.append(ResultRow(e, -1, s, m, k, float(vals.mean()), se, sum(r.n_samples for r in rs)))
    return out


@dataclass
class ComparePoint:
    experiment: str
    step: int
    metric: str
    K: int
    sim: float
    stderr: float
    theory: float
    z: float


@dataclass
class CompareSummary:
    points: list
    status: str  # "pass", "fail" or "no comparable points"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def fraction_within(self) -> float:
        if not self.points:
            return float("nan")
        return sum(abs(p.z) <= Z_PASS for p in self.points) / len(self.points)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "step", "metric", "K", "sim", "stderr", "theory", "z", "within"])
        for p in self.points:
            w.writerow([p.experiment, p.step, p.metric, p.K, repr(p.sim), repr(p.stderr), repr(p.theory),
                        repr(p.z), int(abs(p.z) <= Z_PASS)])
        return buf.getvalue()

    def text(self) -> str:
        if not self.points:
            return "comparison: no comparable points"
        return (f"comparison: {len(self.points)} points, {100 * self.fraction_within:.1f}% within "
                f"|z| <= {Z_PASS:g}: {self.status}")


def compare_report(sim, oracle) -> CompareSummary:
    """Join simulation rows with oracle rows on (experiment, step, metric, K).

    ``sim`` and ``oracle`` are row lists or CSV paths.  Simulation rows are
    averaged over realizations first.  z = (sim - theory) / stderr, with the
    stderr floored at 1e-12 * max(1, |theory|) so exact evaluations compare
    to rounding.  Passes when at least 95% of points have |z| <= 3.
    """
    sim_rows = read_rows(sim) if isinstance(sim, str) else list(sim)
    or_rows = read_rows(oracle) if isinstance(oracle, str) else list(oracle)
    theory_map = {(r.experiment, r.step, r.metric, r.K): r.value for r in or_rows}
    pts = []
    for a in sorted(aggregate(sim_rows), key=lambda r: (r.experiment, r.metric, r.K, r.step)):
        key = (a.experiment, a.step, a.metric, a.K)
        if key not in theory_map:
            continue
        th = theory_map[key]
        sigma = a.stderr if math.isfinite(a.stderr) else 0.0
        sigma = max(sigma, SIGMA_FLOOR * max(1.0, abs(th)))
        pts.append(ComparePoint(a.experiment, a.step, a.metric, a.K, a.value, a.stderr, th, (a.value - th) / sigma))
    if not pts:
        return CompareSummary([], "no comparable points")
    frac = sum(abs(p.z) <= Z_PASS for p in pts) / len(pts)
    return CompareSummary(pts, "pass" if frac >= PASS_FRACTION else "fail")


# execution


def ordered_map(fn, items, threads: int = 1) -> list:
    """map() in input order, over worker processes when threads > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


@dataclass
class ExperimentResult:
    data: dict  # metric -> rows
    oracle: list = field(default_factory=list)
    comparison: Optional[CompareSummary] = None
    extra_files: dict = field(default_factory=dict)  # filename -> text
    summary: list = field(default_factory=list)


def _fp_rows(exp: str, r: int, step: int, ens, Ks) -> list[ResultRow]:
    rows = []
    if ens.mode == "sampled":
        est = frame_potential_mc_multi(ens.states, Ks)
        for k in Ks:
            e = est[k]
            rows.append(ResultRow(exp, r, step, "frame_potential", k, e.value, e.stderr, e.n_samples))
    else:
        for k in Ks:
            e = frame_potential(ens, k)
            rows.append(ResultRow(exp, r, step, "frame_potential", k, e.value, e.stderr, e.n_samples))
    return rows


def _hdt_task(args):
    cfg, r, cap = args
    pc = cfg.protocol_config(cap_dense=cap)
    Ks = cfg.metrics["frame_potential"]
    rows = []
    for t, ens in enumerate(run_hdt(pc, r), start=1):
        rows.extend(_fp_rows(cfg.id, r, t, ens, Ks))
    return rows


def _dt_task(args):
    cfg, r, cap = args
    Ks = cfg.metrics["frame_potential"]
    rows = []
    for nb in cfg.sweep["n_ancilla"]:
        pc = cfg.protocol_config(n_ancilla=nb, steps=1, cap_dense=cap)
        rows.extend(_fp_rows(cfg.id, r, nb, run_dt(pc, r), Ks))
    return rows


def _pop_task(args):
    cfg, r, cap = args
    pc = cfg.protocol_config(cap_dense=cap)
    bins = cfg.options["bins"]
    ens_list = run_hdt(pc, r)
    d = pc.d_A
    refs = [np.eye(d, dtype=complex)[0]] if cfg.options["reference"] == "zero" else list(np.eye(d, dtype=complex))
    rows, hists = [], []
    for t, ens in enumerate(ens_list, start=1):
        h = None
        for ref in refs:
            hh = pop_collect(ens, ref, bins)
            if h is None:
                h = hh
            else:
                h = replace(h, counts=h.counts + hh.counts)
        stat, p, dof = pt_chi2(h)
        n = len(ens) * len(refs)
        rows.append(ResultRow(cfg.id, r, t, "pt_chi2", 0, stat, float("nan"), n))
        rows.append(ResultRow(cfg.id, r, t, "pt_pvalue", 0, p, float("nan"), n))
        rows.append(ResultRow(cfg.id, r, t, "pt_dof", 0, float(dof), float("nan"), n))
        hists.append(h)
    return rows, hists


def _train_task(args):
    from .qml import OptimizerSettings, train_hdt

    cfg, r, cap = args
    p, o = cfg.protocol, cfg.options
    settings = OptimizerSettings(learning_rate=o["learning_rate"], max_iters=o["max_iters"])
    rep = train_hdt(p["steps"], p["n_data"], p["n_ancilla"], seed=cfg.master_seed + r, layers=o["layers"] or None,
                    shots=o["shots"], eval_shots=o["eval_shots"], Ks=tuple(cfg.metrics["frame_potential"]),
                    settings=settings)
    rows = [ResultRow(cfg.id, r, t, "final_loss", 0, l, float("nan"), o["shots"])
            for t, l in enumerate(rep.final_losses, start=1)]
    for k, (val, se) in sorted(rep.fp.items()):
        rows.append(ResultRow(cfg.id, r, p["steps"], "frame_potential", k, val, se, o["eval_shots"]))
    return rows, rep.to_json()


def _group(rows: list[ResultRow]) -> dict:
    out: dict = {}
    for row in rows:
        out.setdefault(row.metric, []).append(row)
    return out


def _preflight(cfg: ExperimentConfig, cap: Optional[int]) -> None:
    if cfg.protocol is None:
        return
    nbs = cfg.sweep.get("n_ancilla") or [cfg.protocol.get("n_ancilla") or 0]
    for nb in nbs:
        steps = 1 if cfg.kind == "dt" or (cfg.kind == "mi" and cfg.options.get("protocol") == "dt") else None
        pc = cfg.protocol_config(n_ancilla=nb, steps=steps, cap_dense=cap)
        if cfg.kind == "mi":
            total = pc.n_data * 2 + pc.n_ancilla
            if total > pc.cap_dense + pc.n_data:
                raise ResourceCapError(f"{total} qubits (with reference) exceed the cap {pc.cap_dense + pc.n_data}")
            if pc.n_data + pc.n_ancilla > pc.cap_dense:
                raise ResourceCapError(f"{pc.n_data + pc.n_ancilla} qubits exceed the dense-unitary cap {pc.cap_dense}")
        elif cfg.kind == "train":
            if pc.n_data + pc.n_ancilla > pc.cap_dense:
                raise ResourceCapError(f"{pc.n_data + pc.n_ancilla} qubits exceed the dense-unitary cap {pc.cap_dense}")
        else:
            pc.check_caps()


def run_experiment(cfg: ExperimentConfig, threads: int = 1, cap_qubits: Optional[int] = None) -> ExperimentResult:
    _preflight(cfg, cap_qubits)
    kind = cfg.kind
    R = cfg.protocol["realizations"] if cfg.protocol else 1
    tasks = [(cfg, r, cap_qubits) for r in range(R)]
    res = ExperimentResult({})
    if kind == "hdt":
        rows = [x for part in ordered_map(_hdt_task, tasks, threads) for x in part]
        res.data = _group(rows)
        p = cfg.protocol
        d_A, d_B = 2 ** p["n_data"], 2 ** p["n_ancilla"]
        for t in range(1, p["steps"] + 1):
            res.oracle.append(ResultRow(cfg.id, -1, t, "frame_potential", 1, float(theory.f1_hdt(d_A, d_B, t)), 0.0, 0))
            for k in cfg.metrics["frame_potential"]:
                if k >= 2:
                    res.oracle.append(ResultRow(cfg.id, -1, t, "fk_lower_bound", k,
                                                theory.fk_hdt_lower_bound(d_A, d_B, k, t), 0.0, 0))
        if 1 in cfg.metrics["frame_potential"]:
            res.comparison = compare_report(rows, res.oracle)
    elif kind == "dt":
        rows = [x for part in ordered_map(_dt_task, tasks, threads) for x in part]
        res.data = _group(rows)
        d_A = 2 ** cfg.protocol["n_data"]
        for nb in cfg.sweep["n_ancilla"]:
            res.oracle.append(ResultRow(cfg.id, -1, nb, "frame_potential", 1, float(theory.f1_dt(d_A, 2**nb)), 0.0, 0))
        if 1 in cfg.metrics["frame_potential"]:
            res.comparison = compare_report(rows, res.oracle)
    elif kind == "pop":
        parts = ordered_map(_pop_task, tasks, threads)
        res.data = _group([x for rows, _ in parts for x in rows])
        hists = parts[0][1]
        d_A = 2 ** cfg.protocol["n_data"]
        from .metrics import pt_density

        for t, h in enumerate(hists, start=1):
            centers = 0.5 * (h.bin_edges[1:] + h.bin_edges[:-1])
            width = np.diff(h.bin_edges)
            dens = h.counts / (h.counts.sum() * width)
            lines = [f"{c!r} {v!r} {pt_density(c, d_A)!r}" for c, v in zip(centers.tolist(), dens.tolist())]
            res.extra_files[f"{cfg.id}_pop_step{t}.dat"] = "# overlap empirical_density pt_density\n" + "\n".join(lines) + "\n"
    elif kind == "mi":
        o = cfg.options
        if o["protocol"] == "hdt":
            pc = cfg.protocol_config(cap_dense=cap_qubits)
            ests = mi_sweep(pc, "hdt", o["mc_threshold"], o["mc_histories"])
            rows = []
            for e in ests:
                for r, val in enumerate(e.per_realization):
                    rows.append(ResultRow(cfg.id, r, e.step, "mi", 0, val, float("nan"), e.n_histories))
                rows.append(ResultRow(cfg.id, -1, e.step, "mi_mean", 0, e.avg_mi, e.realization_std / math.sqrt(e.realizations), e.n_histories))
                rows.append(ResultRow(cfg.id, -1, e.step, "renyi_bound_mean", 0, e.avg_renyi_bound, e.realization_std_renyi / math.sqrt(e.realizations), e.n_histories))
            res.data = _group(rows)
        else:
            p = cfg.protocol
            ests = dt_mi_sweep(p["n_data"], cfg.sweep["n_ancilla"], p["realizations"], cfg.master_seed,
                               mc_histories=o["mc_histories"])
            rows = []
            for e in ests:
                for r, val in enumerate(e.per_realization):
                    rows.append(ResultRow(cfg.id, r, e.step, "mi", 0, val, float("nan"), e.n_histories))
                rows.append(ResultRow(cfg.id, -1, e.step, "renyi_bound_mean", 0, e.avg_renyi_bound,
                                      e.realization_std_renyi / math.sqrt(e.realizations), e.n_histories))
                res.oracle.append(ResultRow(cfg.id, -1, e.step, "dt_mi_bound", 0,
                                            theory.dt_mi_bound(p["n_data"], 2**e.step), 0.0, 0))
            res.data = _group(rows)
    elif kind == "tradeoff":
        o = cfg.options
        rows = []
        for k in o["K"]:
            for nb in cfg.sweep["n_ancilla"]:
                q = theory.ResourceQuery(o["n_data"], k, o["epsilon"], nb)
                bound, steps = theory.steps_required(q)
                rows.append(ResultRow(cfg.id, 0, nb, "steps_bound", k, bound, 0.0, 0))
                rows.append(ResultRow(cfg.id, 0, nb, "steps_required", k, float(steps), 0.0, 0))
            qd = theory.ResourceQuery(o["n_data"], k, o["epsilon"])
            rows.append(ResultRow(cfg.id, 0, 0, "min_ancilla_dt", k, theory.min_ancilla_dt(qd), 0.0, 0))
        res.data = _group(rows)
    elif kind == "qsize":
        o = cfg.options
        rows = []
        for na in cfg.sweep["n_data"]:
            exp = f"{cfg.id}:n_data={na}"
            for k in o["K"]:
                vals = []
                for nb in cfg.sweep["n_ancilla"]:
                    v = theory.qsize(theory.ResourceQuery(na, k, o["epsilon"], nb))
                    vals.append(v)
                    rows.append(ResultRow(exp, 0, nb, "qsize", k, v, 0.0, 0))
                best = cfg.sweep["n_ancilla"][int(np.argmin(vals))]
                rows.append(ResultRow(exp, 0, 0, "qsize_argmin", k, float(best), 0.0, 0))
                rows.append(ResultRow(exp, 0, 0, "qsize_dt", k, theory.qsize_dt(theory.ResourceQuery(na, k, o["epsilon"])), 0.0, 0))
                res.summary.append(f"{exp} K={k}: argmin N_B = {best}")
        res.data = _group(rows)
    elif kind == "oracle":
        o = cfg.options
        d_A, d_B = 2 ** o["n_data"], 2 ** o["n_ancilla"]
        rows = []
        for t in range(1, o["steps"] + 1):
            rows.append(ResultRow(cfg.id, 0, t, "f1_hdt", 1, float(theory.f1_hdt(d_A, d_B, t)), 0.0, 0))
            for k in o["K"]:
                for form in ("asymptotic", "finite_size"):
                    rows.append(ResultRow(cfg.id, 0, t, f"fk_lower_bound_{form}", k,
                                          theory.fk_hdt_lower_bound(d_A, d_B, k, t, form), 0.0, 0))
        for k in o["K"]:
            rows.append(ResultRow(cfg.id, 0, 0, "haar_fp", k, theory.haar_fp(d_A, k), 0.0, 0))
            rows.append(ResultRow(cfg.id, 0, 0, "converged_deviation", k, theory.converged_deviation(d_B, k), 0.0, 0))
        rows.append(ResultRow(cfg.id, 0, 1, "f1_dt", 1, float(theory.f1_dt(d_A, d_B)), 0.0, 0))
        res.data = _group(rows)
    elif kind == "train":
        parts = ordered_map(_train_task, tasks, threads)
        res.data = _group([x for rows, _ in parts for x in rows])
        for r, (_, ck) in enumerate(parts):
            res.extra_files[f"{cfg.id}_checkpoint_r{r}.json"] = ck + "\n"
        d_A = 2 ** cfg.protocol["n_data"]
        for k in cfg.metrics["frame_potential"]:
            res.oracle.append(ResultRow(cfg.id, -1, cfg.protocol["steps"], "haar_fp", k, theory.haar_fp(d_A, k), 0.0, 0))
    elif kind == "statmodel":
        o = cfg.options
        fns = {"exact": perm.stat_model_sum_exact, "approx": perm.stat_model_sum_approx,
               "1dw": perm.lower_bound_1dw, "enumerated": perm.stat_model_sum_enumerated}
        rows = []
        for t in o["steps"]:
            for mth in o["methods"]:
                v = fns[mth](o["n"], o["K"], t, o["d_A"], o["d_B"])
                rows.append(ResultRow(cfg.id, 0, t, f"stat_model_{mth}", o["K"], float(v), 0.0, 0))
            if o["n"] == 0 and o["K"] == 1:
                res.oracle.append(ResultRow(cfg.id, -1, t, "stat_model_exact", 1,
                                            float(theory.f1_hdt(o["d_A"], o["d_B"], t)), 0.0, 0))
        res.data = _group(rows)
        if res.oracle and "exact" in o["methods"]:
            res.comparison = compare_report(rows, res.oracle)
    else:  # pragma: no cover
        raise ValueError(kind)
    if res.comparison is not None:
        res.summary.append(res.comparison.text())
    return res


def write_outputs(cfg: ExperimentConfig, res: ExperimentResult, out_dir: str) -> list[str]:
    """Write every output file atomically; returns the written paths."""
    files = {}
    for metric in sorted(res.data):
        files[f"{cfg.id}_{metric}.csv"] = rows_to_csv(res.data[metric])
    if res.oracle:
        files[f"{cfg.id}_oracle.csv"] = rows_to_csv(res.oracle)
    if res.comparison is not None:
        files[f"{cfg.id}_compare.csv"] = res.comparison.to_csv()
    files.update(res.extra_files)
    summary = [f"experiment {cfg.id} ({cfg.kind}), master_seed {cfg.master_seed}"] + res.summary
    files[f"{cfg.id}_summary.txt"] = "\n".join(summary) + "\n"
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        atomic_write(path, text)
        paths.append(path)
    return paths


__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "ResultRow", "rows_to_csv", "read_rows",
           "compare_report", "CompareSummary", "run_experiment", "write_outputs", "ordered_map", "aggregate",
           "atomic_write", "ResourceCapError", "KINDS"]
