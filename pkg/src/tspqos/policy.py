"""Admission, push-out and service rules for the B-TSP and EB-TSP buffers.

A buffer of capacity ``N`` holds real-time (RT) and non-real-time (NRT)
packets. RT packets are always served first. The schemes differ only in
how arrivals are admitted:

* B-TSP caps the number of queued RT packets at the threshold ``R`` and
  never evicts anything.
* EB-TSP lets RT packets use any free space. When the buffer is full, the
  RT count ``i`` relative to ``R`` decides which class wins: below ``R`` an
  arriving RT packet evicts an NRT packet, above ``R`` an arriving NRT
  packet evicts an RT packet, and at exactly ``R`` every arrival is blocked.

Every function here is pure; the CTMC builder and the simulator both go
through them so the two pipelines cannot drift apart.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple


class SchemeKind(str, enum.Enum):
    EB_TSP = "eb-tsp"
    B_TSP = "b-tsp"

    @classmethod
    def parse(cls, value: "str | SchemeKind") -> "SchemeKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown scheme {value!r}; expected one of "
                         f"{[m.value for m in cls]}")


class PacketClass(str, enum.Enum):
    RT = "rt"
    NRT = "nrt"

    @property
    def other(self) -> "PacketClass":
        return PacketClass.NRT if self is PacketClass.RT else PacketClass.RT


@dataclass(frozen=True)
class SystemParams:
    """Buffer size, RT threshold and the four exponential rates."""

    capacity_n: int
    threshold_r: int
    lambda_rt: float
    lambda_nrt: float
    mu_rt: float
    mu_nrt: float

    def __post_init__(self):
        for name in ("capacity_n", "threshold_r"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.capacity_n < 1:
            raise ValueError(f"capacity_n must be positive, got {self.capacity_n}")
        if not 0 < self.threshold_r <= self.capacity_n:
            raise ValueError(
                f"threshold_r must satisfy 0 < R <= N, got R={self.threshold_r}, "
                f"N={self.capacity_n}")
        for name in ("lambda_rt", "lambda_nrt", "mu_rt", "mu_nrt"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.lambda_rt < 0 or self.lambda_nrt < 0:
            raise ValueError("arrival rates must be nonnegative")
        if self.mu_rt <= 0 or self.mu_nrt <= 0:
            raise ValueError("service rates must be strictly positive")

    @property
    def n_states(self) -> int:
        n = self.capacity_n
        return (n + 1) * (n + 2) // 2

    def arrival_rate(self, cls: PacketClass) -> float:
        return self.lambda_rt if cls is PacketClass.RT else self.lambda_nrt

    def service_rate(self, cls: PacketClass) -> float:
        return self.mu_rt if cls is PacketClass.RT else self.mu_nrt

    def replace(self, **changes) -> "SystemParams":
        fields = {
            "capacity_n": self.capacity_n, "threshold_r": self.threshold_r,
            "lambda_rt": self.lambda_rt, "lambda_nrt": self.lambda_nrt,
            "mu_rt": self.mu_rt, "mu_nrt": self.mu_nrt,
        }
        fields.update(changes)
        return SystemParams(**fields)


# Parameters used for the published comparison; lambda_rt is the swept axis.
TABLE1 = dict(capacity_n=60, threshold_r=15, lambda_nrt=8.0, mu_rt=30.0, mu_nrt=25.0)


class BufferState(NamedTuple):
    i: int  # RT packets
    j: int  # NRT packets

    @property
    def total(self) -> int:
        return self.i + self.j


class Outcome(str, enum.Enum):
    ADMIT = "admit"
    PUSH_OUT = "push-out"
    BLOCK = "block"


class ArrivalOutcome(NamedTuple):
    kind: Outcome
    next: BufferState
    victim: PacketClass | None = None

    @classmethod
    def admit(cls, nxt: BufferState) -> "ArrivalOutcome":
        return cls(Outcome.ADMIT, nxt)

    @classmethod
    def push_out(cls, victim: PacketClass, nxt: BufferState) -> "ArrivalOutcome":
        return cls(Outcome.PUSH_OUT, nxt, victim)

    @classmethod
    def block(cls, state: BufferState) -> "ArrivalOutcome":
        return cls(Outcome.BLOCK, state)


class ServiceOutcome(NamedTuple):
    served: PacketClass
    rate: float
    next: BufferState


class StateSpace:
    """Triangular state space ``{(i, j) : i + j <= N}`` with a fixed order.

    States are listed by total occupancy, and within one occupancy level by
    decreasing RT count, so ``N=2`` gives
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)``. Every transition of either
    scheme moves at most one level, which keeps the generator banded.
    """

    def __init__(self, capacity_n: int):
        if capacity_n < 1:
            raise ValueError(f"capacity must be positive, got {capacity_n}")
        self.capacity_n = capacity_n
        self.states = [BufferState(total - j, j)
                       for total in range(capacity_n + 1)
                       for j in range(total + 1)]
        self._index = {s: k for k, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, k: int) -> BufferState:
        return self.states[k]

    def __contains__(self, state) -> bool:
        return tuple(state) in self._index

    def index(self, state) -> int:
        try:
            return self._index[tuple(state)]
        except KeyError:
            raise ValueError(f"{tuple(state)} is outside the state space "
                             f"for N={self.capacity_n}") from None


def enumerate_states(params: SystemParams) -> StateSpace:
    return StateSpace(params.capacity_n)


def _check_state(state, params: SystemParams) -> BufferState:
    i, j = state
    if i < 0 or j < 0 or i + j > params.capacity_n:
        raise ValueError(f"state {(i, j)} is outside the state space "
                         f"for N={params.capacity_n}")
    return BufferState(i, j)


def on_rt_arrival(state, params: SystemParams, scheme: SchemeKind) -> ArrivalOutcome:
    s = _check_state(state, params)
    i, j = s
    n, r = params.capacity_n, params.threshold_r
    if scheme is SchemeKind.EB_TSP:
        if i + j < n:
            return ArrivalOutcome.admit(BufferState(i + 1, j))
        if i < r:
            return ArrivalOutcome.push_out(PacketClass.NRT, BufferState(i + 1, j - 1))
        return ArrivalOutcome.block(s)
    if scheme is SchemeKind.B_TSP:
        if i < r and i + j < n:
            return ArrivalOutcome.admit(BufferState(i + 1, j))
        return ArrivalOutcome.block(s)
    raise ValueError(f"unknown scheme {scheme!r}")


def on_nrt_arrival(state, params: SystemParams, scheme: SchemeKind) -> ArrivalOutcome:
    s = _check_state(state, params)
    i, j = s
    n, r = params.capacity_n, params.threshold_r
    if scheme is SchemeKind.EB_TSP:
        if i + j < n:
            return ArrivalOutcome.admit(BufferState(i, j + 1))
        if i > r:
            return ArrivalOutcome.push_out(PacketClass.RT, BufferState(i - 1, j + 1))
        return ArrivalOutcome.block(s)
    if scheme is SchemeKind.B_TSP:
        if i + j < n:
            return ArrivalOutcome.admit(BufferState(i, j + 1))
        return ArrivalOutcome.block(s)
    raise ValueError(f"unknown scheme {scheme!r}")


def on_arrival(cls: PacketClass, state, params: SystemParams,
               scheme: SchemeKind) -> ArrivalOutcome:
    if cls is PacketClass.RT:
        return on_rt_arrival(state, params, scheme)
    return on_nrt_arrival(state, params, scheme)


def on_service(state, params: SystemParams | None = None) -> ServiceOutcome | None:
    """Head-of-line service: RT first, NRT only when no RT is queued.

    Without ``params`` the returned rate is NaN; the simulator and the
    generator builder always pass them.
    """
    i, j = state
    if i < 0 or j < 0:
        raise ValueError(f"negative occupancy in state {(i, j)}")
    if params is not None:
        _check_state(state, params)
    if i > 0:
        rate = params.mu_rt if params is not None else math.nan
        return ServiceOutcome(PacketClass.RT, rate, BufferState(i - 1, j))
    if j > 0:
        rate = params.mu_nrt if params is not None else math.nan
        return ServiceOutcome(PacketClass.NRT, rate, BufferState(i, j - 1))
    return None
