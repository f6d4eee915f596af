"""Loss, occupancy and delay measures computed from a stationary distribution.

Losses are available by two independent routes. The closed forms are the
EB-TSP sums over the full-buffer diagonal. The rate-based route walks the
state space, asks the policy what each arrival does, and accounts blocked
and evicted packets per class; it works for either scheme. On EB-TSP the
two routes must agree to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .ctmc import StationaryDistribution, solve
from .policy import Outcome, PacketClass, SchemeKind, SystemParams, on_arrival


class UndefinedRatioWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class QosReport:
    """Per-class QoS for one parameter point. ``None`` marks not-applicable."""

    p_loss_rt: float | None
    p_loss_nrt: float | None
    n_rt: float
    n_nrt: float
    d_rt: float | None
    d_nrt: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def _diag(dist: StationaryDistribution, params: SystemParams) -> np.ndarray:
    if dist.space is None or dist.space.capacity_n != params.capacity_n:
        raise ValueError("distribution does not match the buffer capacity")
    return dist.full_diagonal()


def loss_probabilities_closed_form(dist: StationaryDistribution, params: SystemParams):
    """EB-TSP loss probabilities from the full-buffer probabilities.

    With ``f(i) = p(i, N - i)``::

        P_RT  = sum_{i>=R} f(i) + (lam_nrt / lam_rt) * sum_{i>R} f(i)
        P_NRT = sum_{i<=R} f(i) + (lam_rt / lam_nrt) * sum_{i<R} f(i)

    A zero arrival rate makes the corresponding ratio undefined; that class
    then falls back to the rate-based route (which reports ``None``) and an
    :class:`UndefinedRatioWarning` is emitted.
    """
    f = _diag(dist, params)
    r = params.threshold_r
    lam_rt, lam_nrt = params.lambda_rt, params.lambda_nrt

    fallback = None
    if lam_rt > 0:
        p_rt = f[r:].sum() + (lam_nrt / lam_rt) * f[r + 1:].sum()
    else:
        warnings.warn("lambda_rt = 0: RT loss ratio undefined, using rate-based route",
                      UndefinedRatioWarning, stacklevel=2)
        fallback = loss_probabilities_rate_based(dist, params, SchemeKind.EB_TSP)
        p_rt = fallback[0]
    if lam_nrt > 0:
        p_nrt = f[:r + 1].sum() + (lam_rt / lam_nrt) * f[:r].sum()
    else:
        warnings.warn("lambda_nrt = 0: NRT loss ratio undefined, using rate-based route",
                      UndefinedRatioWarning, stacklevel=2)
        if fallback is None:
            fallback = loss_probabilities_rate_based(dist, params, SchemeKind.EB_TSP)
        p_nrt = fallback[1]
    return (None if p_rt is None else float(p_rt),
            None if p_nrt is None else float(p_nrt))


def loss_rates(dist: StationaryDistribution, params: SystemParams, scheme):
    """Long-run loss rate (packets per unit time) per class.

    Each blocked arrival loses one packet of its own class; each push-out
    loses one packet of the victim class.
    """
    scheme = SchemeKind.parse(scheme)
    lost = {PacketClass.RT: 0.0, PacketClass.NRT: 0.0}
    for k, state in enumerate(dist.space):
        pk = float(dist.p[k])
        if pk == 0.0:
            continue
        for cls in (PacketClass.RT, PacketClass.NRT):
            lam = params.arrival_rate(cls)
            if lam == 0.0:
                continue
            outcome = on_arrival(cls, state, params, scheme)
            if outcome.kind is Outcome.BLOCK:
                lost[cls] += lam * pk
            elif outcome.kind is Outcome.PUSH_OUT:
                lost[outcome.victim] += lam * pk
    return lost[PacketClass.RT], lost[PacketClass.NRT]


def loss_probabilities_rate_based(dist: StationaryDistribution, params: SystemParams,
                                  scheme):
    lost_rt, lost_nrt = loss_rates(dist, params, scheme)
    p_rt = float(lost_rt / params.lambda_rt) if params.lambda_rt > 0 else None
    p_nrt = float(lost_nrt / params.lambda_nrt) if params.lambda_nrt > 0 else None
    return p_rt, p_nrt


def mean_occupancy(dist: StationaryDistribution):
    states = np.asarray(dist.space.states, dtype=float)
    n_rt = float(dist.p @ states[:, 0])
    n_nrt = float(dist.p @ states[:, 1])
    return n_rt, n_nrt


def little_delays(occupancy, losses, params: SystemParams):
    """Mean delays via Little's law.

    The NRT delay counts every packet in the buffer, since an NRT packet
    waits behind all queued RT packets as well as earlier NRT ones::

        D_RT  = N_RT / (lam_rt (1 - P_RT))
        D_NRT = (N_RT + N_NRT) / (lam_nrt (1 - P_NRT))

    A class with zero effective arrival rate gets ``None``.
    """
    n_rt, n_nrt = occupancy
    p_rt, p_nrt = losses

    def _delay(num, lam, loss):
        if loss is None or lam <= 0:
            return None
        eff = lam * (1.0 - loss)
        if not eff > 0:
            return None
        return num / eff

    return (_delay(n_rt, params.lambda_rt, p_rt),
            _delay(n_rt + n_nrt, params.lambda_nrt, p_nrt))


def qos_report(dist: StationaryDistribution, params: SystemParams, scheme,
               route: str = "auto") -> QosReport:
    """Full report for one solved point.

    ``route="auto"`` uses the closed forms for EB-TSP when both arrival
    rates are positive and the rate-based route otherwise.
    """
    scheme = SchemeKind.parse(scheme)
    if route == "auto":
        use_closed = (scheme is SchemeKind.EB_TSP
                      and params.lambda_rt > 0 and params.lambda_nrt > 0)
        route = "closed" if use_closed else "rate"
    if route == "closed":
        if scheme is not SchemeKind.EB_TSP:
            raise ValueError("closed-form losses apply to EB-TSP only")
        losses = loss_probabilities_closed_form(dist, params)
    elif route == "rate":
        losses = loss_probabilities_rate_based(dist, params, scheme)
    else:
        raise ValueError(f"unknown route {route!r}")
    occ = mean_occupancy(dist)
    delays = little_delays(occ, losses, params)
    return QosReport(losses[0], losses[1], occ[0], occ[1], delays[0], delays[1])


def analyze(params: SystemParams, scheme, route: str = "auto") -> QosReport:
    return qos_report(solve(params, scheme), params, scheme, route=route)
