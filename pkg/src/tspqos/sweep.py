"""Parameter sweeps, scheme comparison and CSV reports."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from .metrics import analyze
from .policy import TABLE1, SchemeKind, SystemParams
from .sim import DEFAULT_EVENTS, simulate

# CLI/CSV parameter name -> SystemParams field.
PARAM_NAMES = {
    "n": "capacity_n",
    "r": "threshold_r",
    "lambda_rt": "lambda_rt",
    "lambda_nrt": "lambda_nrt",
    "mu_rt": "mu_rt",
    "mu_nrt": "mu_nrt",
}
INTEGER_PARAMS = {"n", "r"}
MODES = ("analytic", "sim")

CSV_COLUMNS = [
    "param_name", "param_value", "scheme", "mode",
    "p_loss_rt", "p_loss_nrt", "n_rt", "n_nrt", "d_rt", "d_nrt",
    "se_p_loss_rt", "se_p_loss_nrt", "se_d_rt", "se_d_nrt",
    "seed", "error",
]


def normalize_param(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    aliases = {"capacity_n": "n", "threshold_r": "r"}
    key = aliases.get(key, key)
    if key not in PARAM_NAMES:
        raise ValueError(f"unknown parameter {name!r}; expected one of {sorted(PARAM_NAMES)}")
    return key


def default_base() -> dict:
    return {"n": TABLE1["capacity_n"], "r": TABLE1["threshold_r"],
            "lambda_rt": 30.0, "lambda_nrt": TABLE1["lambda_nrt"],
            "mu_rt": TABLE1["mu_rt"], "mu_nrt": TABLE1["mu_nrt"]}


@dataclass(frozen=True)
class SweepSpec:
    param: str = "lambda_rt"
    start: float = 5.0
    stop: float = 50.0
    step: float = 5.0
    base: dict = field(default_factory=default_base)
    schemes: tuple = (SchemeKind.EB_TSP, SchemeKind.B_TSP)
    modes: tuple = ("analytic",)
    events: int = DEFAULT_EVENTS
    warmup: float = 0.1
    batches: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "param", normalize_param(self.param))
        for name in ("start", "stop", "step"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0 or (name == "step" and value == 0):
                raise ValueError(f"sweep {name} must be a finite number >= 0 "
                                 f"(step > 0), got {value}")
        if self.start > self.stop:
            raise ValueError(f"empty sweep: start {self.start} > stop {self.stop}")
        if not self.schemes:
            raise ValueError("select at least one scheme")
        object.__setattr__(self, "schemes",
                           tuple(SchemeKind.parse(s) for s in self.schemes))
        modes = tuple("sim" if m == "simulation" else m for m in self.modes)
        if not modes or any(m not in MODES for m in modes):
            raise ValueError(f"modes must be drawn from {MODES}, got {self.modes}")
        object.__setattr__(self, "modes", modes)
        base = default_base()
        base.update({normalize_param(k): v for k, v in self.base.items()})
        object.__setattr__(self, "base", base)

    def grid(self) -> list:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        values = [self.start + k * self.step for k in range(count)]
        # Kill accumulated float noise such as 0.30000000000000004.
        values = [float(np.round(v, 12)) for v in values]
        if self.param in INTEGER_PARAMS:
            values = [int(round(v)) for v in values]
        return values

    def params_at(self, value) -> SystemParams:
        values = dict(self.base)
        values[self.param] = value
        return SystemParams(**{PARAM_NAMES[k]: v for k, v in values.items()})


@dataclass
class ReportRow:
    param_name: str
    param_value: float
    scheme: str
    mode: str
    p_loss_rt: float | None = None
    p_loss_nrt: float | None = None
    n_rt: float | None = None
    n_nrt: float | None = None
    d_rt: float | None = None
    d_nrt: float | None = None
    se_p_loss_rt: float | None = None
    se_p_loss_nrt: float | None = None
    se_d_rt: float | None = None
    se_d_nrt: float | None = None
    seed: int | None = None
    error: str = ""
    timestamp: str = ""


def _row_seed(base_seed: int, point: int, scheme: SchemeKind) -> int:
    ss = np.random.SeedSequence([base_seed, point, list(SchemeKind).index(scheme)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _clean(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def evaluate_point(spec: SweepSpec, point: int, value, scheme: SchemeKind, mode: str,
                   timestamp: str = "") -> ReportRow:
    """One report row; failures become a row with ``error`` set."""
    row = ReportRow(spec.param, value, scheme.value, mode, timestamp=timestamp)
    try:
        params = spec.params_at(value)
        if mode == "analytic":
            qos = analyze(params, scheme)
        else:
            row.seed = _row_seed(spec.seed, point, scheme)
            rep = simulate(params, scheme, seed=row.seed, events=spec.events,
                           warmup=spec.warmup, batches=spec.batches)
            qos = rep.qos
            row.se_p_loss_rt = _clean(rep.se_p_loss_rt)
            row.se_p_loss_nrt = _clean(rep.se_p_loss_nrt)
            row.se_d_rt = _clean(rep.se_d_rt)
            row.se_d_nrt = _clean(rep.se_d_nrt)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        return row
    row.p_loss_rt = _clean(qos.p_loss_rt)
    row.p_loss_nrt = _clean(qos.p_loss_nrt)
    row.n_rt = _clean(qos.n_rt)
    row.n_nrt = _clean(qos.n_nrt)
    row.d_rt = _clean(qos.d_rt)
    row.d_nrt = _clean(qos.d_nrt)
    return row


def _evaluate(args):
    return evaluate_point(*args)


def run_sweep(spec: SweepSpec, timestamp: bool = False, workers: int = 1) -> list:
    """Rows ordered by grid point, then scheme, then mode.

    With ``workers > 1`` the points are evaluated in a process pool; the
    result order does not depend on completion order.
    """
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else ""
    jobs = [(spec, k, value, scheme, mode, stamp)
            for k, value in enumerate(spec.grid())
            for scheme in spec.schemes
            for mode in spec.modes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate, jobs))
    return [_evaluate(job) for job in jobs]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, fh, timestamp: bool = False) -> None:
    columns = CSV_COLUMNS + (["timestamp"] if timestamp else [])
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in columns])


def rows_to_csv(rows, timestamp: bool = False) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, timestamp=timestamp)
    return buf.getvalue()


_FLOAT_FIELDS = {f.name for f in fields(ReportRow)} - {
    "param_name", "param_value", "scheme", "mode", "seed", "error", "timestamp"}


def read_csv(fh) -> list:
    rows = []
    for rec in csv.DictReader(fh):
        kwargs = {}
        for key, text in rec.items():
            if key in _FLOAT_FIELDS:
                kwargs[key] = float(text) if text != "" else None
            elif key == "seed":
                kwargs[key] = int(text) if text != "" else None
            elif key == "param_value":
                name = rec["param_name"]
                kwargs[key] = int(text) if name in INTEGER_PARAMS else float(text)
            else:
                kwargs[key] = text
        rows.append(ReportRow(**kwargs))
    return rows


@dataclass
class PointComparison:
    param_value: float
    mode: str
    delta_p_loss_rt: float | None
    delta_p_loss_nrt: float | None
    delta_d_rt: float | None
    delta_d_nrt: float | None
    violation: bool


@dataclass
class ComparisonSummary:
    points: list
    max_relative: dict
    violations: list

    def rt_loss_gaps(self, mode: str = "analytic") -> list:
        """``P_RT(B-TSP) - P_RT(EB-TSP)`` along the grid."""
        return [(p.param_value, -p.delta_p_loss_rt) for p in self.points
                if p.mode == mode and p.delta_p_loss_rt is not None]

    def format(self) -> str:
        lines = ["param_value mode dP_loss_rt dP_loss_nrt dD_rt dD_nrt flag"]
        for p in self.points:
            vals = [p.delta_p_loss_rt, p.delta_p_loss_nrt, p.delta_d_rt, p.delta_d_nrt]
            cells = ["na" if v is None else f"{v:+.4g}" for v in vals]
            lines.append(f"{p.param_value:g} {p.mode} {' '.join(cells)}"
                         f"{' VIOLATION' if p.violation else ''}")
        rel = ", ".join(f"{k}={'na' if v is None else f'{v:.4g}'}"
                        for k, v in self.max_relative.items())
        lines.append(f"max relative deviation (EB vs B): {rel}")
        lines.append(f"P_loss_rt(EB) <= P_loss_rt(B) violations: {len(self.violations)}")
        return "\n".join(lines)


_COMPARED = ("p_loss_rt", "p_loss_nrt", "d_rt", "d_nrt")


def compare_schemes(rows) -> ComparisonSummary:
    """EB-TSP minus B-TSP, point by point, for every mode present."""
    table = {}
    for row in rows:
        if row.error:
            continue
        table[(row.mode, row.param_value, SchemeKind.parse(row.scheme))] = row
    keys = {(m, v) for (m, v, _) in table}
    eb_keys = {(m, v) for (m, v, s) in table if s is SchemeKind.EB_TSP}
    b_keys = {(m, v) for (m, v, s) in table if s is SchemeKind.B_TSP}
    if not keys or eb_keys != b_keys:
        raise ValueError("both schemes must be present on the same grid; "
                         f"EB-only points {sorted(eb_keys - b_keys)}, "
                         f"B-only points {sorted(b_keys - eb_keys)}")

    points, violations = [], []
    max_rel = {name: None for name in _COMPARED}
    for mode, value in sorted(keys, key=lambda mv: (MODES.index(mv[0]), mv[1])):
        eb = table[(mode, value, SchemeKind.EB_TSP)]
        b = table[(mode, value, SchemeKind.B_TSP)]
        deltas = {}
        for name in _COMPARED:
            x, y = getattr(eb, name), getattr(b, name)
            if x is None or y is None:
                deltas[name] = None
                continue
            deltas[name] = x - y
            if y != 0:
                rel = abs(x - y) / abs(y)
            else:
                rel = 0.0 if x == 0 else math.inf
            if max_rel[name] is None or rel > max_rel[name]:
                max_rel[name] = rel
        violation = (eb.p_loss_rt is not None and b.p_loss_rt is not None
                     and eb.p_loss_rt > b.p_loss_rt)
        point = PointComparison(value, mode, deltas["p_loss_rt"], deltas["p_loss_nrt"],
                                deltas["d_rt"], deltas["d_nrt"], violation)
        points.append(point)
        if violation:
            violations.append(point)
    return ComparisonSummary(points, max_rel, violations)
