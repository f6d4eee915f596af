"""Packet-level discrete-event simulation of the TSP buffer.

All clocks are exponential, so after each event the next one is drawn from
the competing clocks afresh: a holding time with the total enabled rate and
an event chosen in proportion to its rate. The admission outcome of every
arrival comes from tables compiled out of :mod:`tspqos.policy`, which keeps
the simulated rules identical to the ones behind the generator.

Packets are tracked individually (arrival timestamps in one FIFO per class)
so that sojourn times can be measured. RT and NRT queues are served from
the head; a push-out evicts the tail packet of the victim class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .metrics import QosReport
from .policy import (
    Outcome,
    PacketClass,
    SchemeKind,
    SystemParams,
    enumerate_states,
    on_arrival,
    on_service,
)

# Count columns (int64).
ARR_RT, ARR_NRT, ADM_RT, ADM_NRT, BLK_RT, BLK_NRT, EV_RT, EV_NRT, SRV_RT, SRV_NRT = range(10)
N_COUNTS = 10
# Sum columns (float64).
SOJ_SRV_RT, SOJ_SRV_NRT, SOJ_ALL_RT, SOJ_ALL_NRT, AREA_RT, AREA_NRT, ELAPSED = range(7)
N_SUMS = 7

EVENT_KINDS = ("rt-admit", "rt-push-out", "rt-block",
               "nrt-admit", "nrt-push-out", "nrt-block",
               "rt-service", "nrt-service")

_OUTCOME_CODE = {Outcome.ADMIT: 0, Outcome.PUSH_OUT: 1, Outcome.BLOCK: 2}
_CHUNK = 1 << 18
DEFAULT_EVENTS = 1_000_000


@dataclass(frozen=True)
class SimConfig:
    params: SystemParams
    scheme: SchemeKind = SchemeKind.EB_TSP
    seed: int = 0
    events: int | None = None
    horizon: float | None = None
    warmup: float = 0.1
    batches: int = 32
    trace: int = 0  # number of leading events to record, 0 disables

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme))
        if self.events is not None and self.horizon is not None:
            raise ValueError("give exactly one stop rule: events or horizon")
        if self.events is None and self.horizon is None:
            object.__setattr__(self, "events", DEFAULT_EVENTS)
        if self.events is not None and self.events <= 0:
            raise ValueError("event budget must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("time horizon must be positive")
        if not 0.0 <= self.warmup <= 0.5:
            raise ValueError(f"warmup must lie in [0, 0.5], got {self.warmup}")
        if self.batches < 2:
            raise ValueError("need at least two batches")
        if self.events is not None and self.events - int(self.events * self.warmup) < self.batches:
            raise ValueError("event budget too small for the number of batches")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimCounters:
    """Per-batch tallies of a measured run.

    ``counts[b, col]`` and ``sums[b, col]`` hold batch ``b``; totals are
    column sums. ``initial`` and ``final`` are the (RT, NRT) buffer contents
    when measurement started and when the run ended, so per class
    ``admitted + initial == served + evicted + final`` exactly.
    """

    counts: np.ndarray
    sums: np.ndarray
    initial: tuple[int, int]
    final: tuple[int, int]
    events: int
    time: float
    seed: int
    trace: list = field(default_factory=list)

    def total(self, col: int) -> int:
        return int(self.counts[:, col].sum())

    def total_sum(self, col: int) -> float:
        return float(self.sums[:, col].sum())

    @property
    def elapsed(self) -> float:
        return self.total_sum(ELAPSED)

    def per_class(self, cls: PacketClass) -> dict:
        k = 0 if cls is PacketClass.RT else 1
        return {
            "arrivals": self.total(ARR_RT + k),
            "admitted": self.total(ADM_RT + k),
            "blocked": self.total(BLK_RT + k),
            "evicted": self.total(EV_RT + k),
            "served": self.total(SRV_RT + k),
            "sojourn_served": self.total_sum(SOJ_SRV_RT + k),
            "sojourn_all": self.total_sum(SOJ_ALL_RT + k),
            "area": self.total_sum(AREA_RT + k),
            "initial": self.initial[k],
            "final": self.final[k],
        }

    def conservation_holds(self) -> bool:
        for cls in PacketClass:
            c = self.per_class(cls)
            if c["arrivals"] != c["admitted"] + c["blocked"]:
                return False
            if c["admitted"] + c["initial"] != c["served"] + c["evicted"] + c["final"]:
                return False
        return True


def policy_tables(params: SystemParams, scheme):
    """Integer lookup tables equivalent to the policy functions.

    Returns ``(occ, arrival, service)`` where ``occ[k] = (i, j)``,
    ``arrival[c, k] = (outcome_code, next_index)`` for class ``c`` (0 = RT)
    and ``service[k] = (served_class or -1, next_index)``.
    """
    scheme = SchemeKind.parse(scheme)
    space = enumerate_states(params)
    n = len(space)
    occ = np.array(space.states, dtype=np.int64).reshape(n, 2)
    arrival = np.zeros((2, n, 2), dtype=np.int64)
    service = np.full((n, 2), -1, dtype=np.int64)
    for k, state in enumerate(space):
        for c, cls in enumerate((PacketClass.RT, PacketClass.NRT)):
            out = on_arrival(cls, state, params, scheme)
            arrival[c, k] = (_OUTCOME_CODE[out.kind], space.index(out.next))
        served = on_service(state, params)
        if served is not None:
            service[k] = (0 if served.served is PacketClass.RT else 1,
                          space.index(served.next))
    return occ, arrival, service


@numba.njit(cache=True)
def _accumulate_time(occ, k, t0, t1, warm_t, batch_len, nbatch, sums):
    # Split [t0, t1] across time batches after the warmup boundary.
    lo = max(t0, warm_t)
    while lo < t1:
        b = min(int((lo - warm_t) / batch_len), nbatch - 1)
        hi = t1
        if b < nbatch - 1:
            hi = min(t1, warm_t + (b + 1) * batch_len)
        if hi <= lo:
            # Rounding stall at a batch edge.
            hi = min(t1, np.nextafter(lo, np.inf))
        d = hi - lo
        sums[b, 4] += occ[k, 0] * d
        sums[b, 5] += occ[k, 1] * d
        sums[b, 6] += d
        lo = hi


@numba.njit(cache=True)
def _run_chunk(occ, arrival, service, rates, capacity, expo, unif,
               by_time, budget, warm_e, horizon, warm_t, batch_len, nbatch,
               st_f, st_i, bufs, counts, sums, trace_t, trace_e):
    # st_i: [state, events, head_rt, len_rt, head_nrt, len_nrt, done,
    #        n_trace, initial_rt, initial_nrt, measuring]
    lam_rt = rates[0]
    lam_nrt = rates[1]
    cap = capacity + 1
    ntrace = trace_t.shape[0]
    for step in range(expo.shape[0]):
        k = st_i[0]
        e = st_i[1]
        t = st_f[0]
        srv_cls = service[k, 0]
        mu = 0.0
        if srv_cls >= 0:
            mu = rates[2 + srv_cls]
        total = lam_rt + lam_nrt + mu
        dt = expo[step] / total
        t_new = t + dt

        if by_time:
            if t_new > horizon:
                if st_i[10] == 0:
                    st_i[10] = 1
                    st_i[8] = st_i[3]
                    st_i[9] = st_i[5]
                _accumulate_time(occ, k, t, horizon, warm_t, batch_len, nbatch, sums)
                st_f[0] = horizon
                st_i[6] = 1
                return
            measuring = t_new > warm_t
            b = 0
            if measuring:
                b = min(int((t_new - warm_t) / batch_len), nbatch - 1)
        else:
            if e >= budget:
                st_i[6] = 1
                return
            measuring = e >= warm_e
            b = 0
            if measuring:
                b = (e - warm_e) * nbatch // (budget - warm_e)

        if measuring and st_i[10] == 0:
            st_i[10] = 1
            st_i[8] = st_i[3]
            st_i[9] = st_i[5]

        if by_time:
            _accumulate_time(occ, k, t, t_new, warm_t, batch_len, nbatch, sums)
        elif measuring:
            sums[b, 4] += occ[k, 0] * dt
            sums[b, 5] += occ[k, 1] * dt
            sums[b, 6] += dt

        u = unif[step] * total
        if u < lam_rt + lam_nrt:
            c = 0 if u < lam_rt else 1
            code = arrival[c, k, 0]
            nxt = arrival[c, k, 1]
            kind = 3 * c + code
            if measuring:
                counts[b, c] += 1
            if code == 2:
                if measuring:
                    counts[b, 4 + c] += 1
            else:
                if measuring:
                    counts[b, 2 + c] += 1
                if code == 1:
                    # Push-out drops the tail packet of the other class.
                    v = 1 - c
                    st_i[3 + 2 * v] -= 1
                    pos = (st_i[2 + 2 * v] + st_i[3 + 2 * v]) % cap
                    if measuring:
                        counts[b, 6 + v] += 1
                        sums[b, 2 + v] += t_new - bufs[v, pos]
                pos = (st_i[2 + 2 * c] + st_i[3 + 2 * c]) % cap
                bufs[c, pos] = t_new
                st_i[3 + 2 * c] += 1
        else:
            c = srv_cls
            nxt = service[k, 1]
            kind = 6 + c
            head = st_i[2 + 2 * c]
            wait = t_new - bufs[c, head]
            st_i[2 + 2 * c] = (head + 1) % cap
            st_i[3 + 2 * c] -= 1
            if measuring:
                counts[b, 8 + c] += 1
                sums[b, c] += wait
                sums[b, 2 + c] += wait

        if st_i[3] != occ[nxt, 0] or st_i[5] != occ[nxt, 1]:
            raise RuntimeError("packet bookkeeping diverged from the chain state")
        if st_i[3] + st_i[5] > capacity:
            raise RuntimeError("buffer occupancy exceeded capacity")

        if st_i[7] < ntrace:
            trace_t[st_i[7]] = t_new
            trace_e[st_i[7], 0] = kind
            trace_e[st_i[7], 1] = k
            trace_e[st_i[7], 2] = nxt
            st_i[7] += 1

        st_i[0] = nxt
        st_i[1] = e + 1
        st_f[0] = t_new


def run_simulation(config: SimConfig) -> SimCounters:
    """Simulate one run; identical configs give bit-identical counters."""
    params = config.params
    occ, arrival, service = policy_tables(params, config.scheme)
    rates = np.array([params.lambda_rt, params.lambda_nrt, params.mu_rt, params.mu_nrt])
    nb = config.batches
    counts = np.zeros((nb, N_COUNTS), dtype=np.int64)
    sums = np.zeros((nb, N_SUMS))
    st_f = np.zeros(1)
    st_i = np.zeros(11, dtype=np.int64)
    bufs = np.zeros((2, params.capacity_n + 1))
    trace_t = np.zeros(config.trace)
    trace_e = np.zeros((config.trace, 3), dtype=np.int64)

    if config.events is not None:
        by_time, budget = False, int(config.events)
        warm_e = int(budget * config.warmup)
        horizon = warm_t = batch_len = 0.0
    else:
        by_time, budget, warm_e = True, 0, 0
        horizon = float(config.horizon)
        warm_t = horizon * config.warmup
        batch_len = (horizon - warm_t) / nb

    if params.lambda_rt == 0 and params.lambda_nrt == 0:
        # Nothing can ever happen in an empty buffer without arrivals.
        st_i[6] = 1

    rng = np.random.Generator(np.random.PCG64(config.seed))
    while st_i[6] == 0:
        expo = rng.standard_exponential(_CHUNK)
        unif = rng.random(_CHUNK)
        _run_chunk(occ, arrival, service, rates, params.capacity_n, expo, unif,
                   by_time, budget, warm_e, horizon, warm_t, batch_len, nb,
                   st_f, st_i, bufs, counts, sums, trace_t, trace_e)

    trace = []
    for n in range(int(st_i[7])):
        trace.append((float(trace_t[n]), EVENT_KINDS[trace_e[n, 0]],
                      tuple(int(x) for x in occ[trace_e[n, 1]]),
                      tuple(int(x) for x in occ[trace_e[n, 2]])))
    measured = bool(st_i[10])
    return SimCounters(
        counts=counts, sums=sums,
        initial=(int(st_i[8]), int(st_i[9])) if measured else (0, 0),
        final=(int(st_i[3]), int(st_i[5])) if measured else (0, 0),
        events=int(st_i[1]), time=float(st_f[0]), seed=config.seed, trace=trace,
    )


def write_trace(counters: SimCounters, path) -> Path:
    """One line per event: time, kind, state before, state after."""
    path = Path(path)
    with path.open("w") as fh:
        for t, kind, before, after in counters.trace:
            fh.write(f"{t:.9f} {kind} {before[0]},{before[1]} {after[0]},{after[1]}\n")
    return path


@dataclass(frozen=True)
class SimReport:
    """Simulated QoS with batch-means standard errors.

    ``d_rt``/``d_nrt`` in ``qos`` are mean sojourns of *served* packets;
    ``d_all_*`` include evicted packets up to their eviction.
    """

    qos: QosReport
    se_p_loss_rt: float | None
    se_p_loss_nrt: float | None
    se_n_rt: float
    se_n_nrt: float
    se_d_rt: float | None
    se_d_nrt: float | None
    d_all_rt: float | None
    d_all_nrt: float | None
    arrivals_rt: int
    arrivals_nrt: int
    little: dict


def _batch_se(values: np.ndarray) -> float | None:
    v = values[np.isfinite(values)]
    if v.size < 2:
        return None
    return float(v.std(ddof=1) / math.sqrt(v.size))


def _ratio(num, den):
    return float(num) / float(den) if den > 0 else None


def little_check(counters: SimCounters) -> dict:
    """Relative gap between time-average occupancy and admission rate times
    the mean sojourn of all departed admitted packets, per class and total."""
    out = {}
    el = counters.elapsed
    tot_area = tot_adm = tot_soj = tot_dep = 0.0
    for cls in PacketClass:
        c = counters.per_class(cls)
        dep = c["served"] + c["evicted"]
        tot_area += c["area"]
        tot_adm += c["admitted"]
        tot_soj += c["sojourn_all"]
        tot_dep += dep
        out[cls.value] = _little_gap(c["area"], c["admitted"], c["sojourn_all"], dep, el)
    out["total"] = _little_gap(tot_area, tot_adm, tot_soj, tot_dep, el)
    return out


def _little_gap(area, admitted, soj, departed, elapsed):
    if elapsed <= 0 or admitted == 0 or departed == 0:
        return None
    occupancy = area / elapsed
    predicted = (admitted / elapsed) * (soj / departed)
    if occupancy == 0:
        return 0.0 if predicted == 0 else math.inf
    return abs(occupancy - predicted) / occupancy


def qos_from_sim(counters: SimCounters, params: SystemParams) -> SimReport:
    el = counters.elapsed
    if not el > 0:
        raise ValueError("run has no measured time")
    cnt, sm = counters.counts, counters.sums
    with np.errstate(divide="ignore", invalid="ignore"):
        batch_el = sm[:, ELAPSED]
        occ_b = sm[:, [AREA_RT, AREA_NRT]] / batch_el[:, None]

    loss, se_loss, delay, se_delay, d_all = [], [], [], [], []
    for k, cls in enumerate(PacketClass):
        c = counters.per_class(cls)
        if c["arrivals"] == 0:
            loss.append(None)
            se_loss.append(None)
        else:
            loss.append((c["blocked"] + c["evicted"]) / c["arrivals"])
            with np.errstate(divide="ignore", invalid="ignore"):
                lb = (cnt[:, BLK_RT + k] + cnt[:, EV_RT + k]) / cnt[:, ARR_RT + k]
            se_loss.append(_batch_se(lb))
        delay.append(_ratio(c["sojourn_served"], c["served"]))
        with np.errstate(divide="ignore", invalid="ignore"):
            db = sm[:, SOJ_SRV_RT + k] / cnt[:, SRV_RT + k]
        se_delay.append(_batch_se(db) if delay[-1] is not None else None)
        d_all.append(_ratio(c["sojourn_all"], c["served"] + c["evicted"]))

    n_rt = counters.total_sum(AREA_RT) / el
    n_nrt = counters.total_sum(AREA_NRT) / el
    qos = QosReport(loss[0], loss[1], n_rt, n_nrt, delay[0], delay[1])
    return SimReport(
        qos=qos,
        se_p_loss_rt=se_loss[0], se_p_loss_nrt=se_loss[1],
        se_n_rt=_batch_se(occ_b[:, 0]) or 0.0, se_n_nrt=_batch_se(occ_b[:, 1]) or 0.0,
        se_d_rt=se_delay[0], se_d_nrt=se_delay[1],
        d_all_rt=d_all[0], d_all_nrt=d_all[1],
        arrivals_rt=counters.total(ARR_RT), arrivals_nrt=counters.total(ARR_NRT),
        little=little_check(counters),
    )


def simulate(params: SystemParams, scheme=SchemeKind.EB_TSP, **kwargs) -> SimReport:
    return qos_from_sim(run_simulation(SimConfig(params, scheme, **kwargs)), params)


def within_standard_errors(estimate: float, reference: float, se: float | None,
                           k: float = 3.0, n_trials: int | None = None) -> bool:
    """``|estimate - reference| <= k * se``.

    For a proportion estimated from ``n_trials`` trials the standard error
    is floored at ``1 / n_trials``. That floor only matters when no batch
    saw a single event (a loss probability far below ``1 / n_trials``),
    where the batch-means standard error is exactly zero; ``k / n_trials``
    is then the usual rule-of-three bound for zero observed events.
    """
    scale = se or 0.0
    if n_trials is not None:
        scale = max(scale, 1.0 / n_trials if n_trials > 0 else math.inf)
    return abs(estimate - reference) <= k * scale
