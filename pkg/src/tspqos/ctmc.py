"""Generator construction and stationary solution for the (RT, NRT) chain."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .policy import (
    Outcome,
    PacketClass,
    SchemeKind,
    StateSpace,
    SystemParams,
    enumerate_states,
    on_arrival,
    on_service,
)


class SolverError(RuntimeError):
    """The stationary system could not be solved to tolerance."""

    def __init__(self, message: str, *, residual: float | None = None,
                 dimension: int | None = None):
        details = []
        if residual is not None:
            details.append(f"residual={residual:.3e}")
        if dimension is not None:
            details.append(f"dimension={dimension}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.residual = residual
        self.dimension = dimension


@dataclass
class RateMatrix:
    q: np.ndarray
    space: StateSpace
    params: SystemParams
    scheme: SchemeKind

    @property
    def dimension(self) -> int:
        return self.q.shape[0]

    def rate(self, src, dst) -> float:
        return float(self.q[self.space.index(src), self.space.index(dst)])


@dataclass
class StationaryDistribution:
    p: np.ndarray
    space: StateSpace
    residual: float = field(default=np.nan)

    def __getitem__(self, state) -> float:
        return float(self.p[self.space.index(state)])

    def grid(self) -> np.ndarray:
        """Probabilities as an ``(N+1, N+1)`` array indexed ``[i, j]``."""
        n = self.space.capacity_n
        out = np.zeros((n + 1, n + 1))
        for k, (i, j) in enumerate(self.space):
            out[i, j] = self.p[k]
        return out

    def full_diagonal(self) -> np.ndarray:
        """``p(i, N - i)`` for ``i = 0..N``."""
        n = self.space.capacity_n
        return np.array([self[(i, n - i)] for i in range(n + 1)])


def transitions(params: SystemParams, scheme: SchemeKind):
    """Yield ``(src_index, dst_index, rate, event)`` for every enabled event.

    ``event`` is ``"rt"``, ``"nrt"`` or ``"service"``. Blocked arrivals and
    zero-rate events are skipped.
    """
    space = enumerate_states(params)
    for k, state in enumerate(space):
        for cls in (PacketClass.RT, PacketClass.NRT):
            rate = params.arrival_rate(cls)
            if rate <= 0:
                continue
            outcome = on_arrival(cls, state, params, scheme)
            if outcome.kind is Outcome.BLOCK:
                continue
            yield k, space.index(outcome.next), rate, cls.value
        served = on_service(state, params)
        if served is not None:
            yield k, space.index(served.next), served.rate, "service"


def build_generator(params: SystemParams, scheme) -> RateMatrix:
    scheme = SchemeKind.parse(scheme)
    space = enumerate_states(params)
    q = np.zeros((len(space), len(space)))
    for src, dst, rate, _ in transitions(params, scheme):
        q[src, dst] += rate
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return RateMatrix(q, space, params, scheme)


def _bandwidth(a: np.ndarray) -> int:
    rows, cols = np.nonzero(a)
    if rows.size == 0:
        return 0
    return int(np.abs(rows - cols).max())


def gth(q: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination for an irreducible generator.

    Only nonnegative off-diagonal rates enter the computation, so there is
    no subtractive cancellation. Elimination runs from the last state to
    the first and touches only the band of the matrix, which it preserves;
    for a generator of bandwidth ``b`` the cost is ``O(n b^2)``.
    """
    a = np.array(q, dtype=float, copy=True)
    n = a.shape[0]
    if n == 1:
        return np.ones(1)
    np.fill_diagonal(a, 0.0)
    if (a < 0).any():
        raise SolverError("generator has negative off-diagonal rates", dimension=n)
    b = max(_bandwidth(a), 1)

    for k in range(n - 1, 0, -1):
        lo = max(0, k - b)
        s = a[k, lo:k].sum()
        if not s > 0:
            raise SolverError(f"state {k} has no path back to lower states; "
                              "chain is not irreducible", dimension=n)
        a[lo:k, k] /= s
        a[lo:k, lo:k] += np.outer(a[lo:k, k], a[k, lo:k])

    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        lo = max(0, k - b)
        pi[k] = pi[lo:k] @ a[lo:k, k]
    return pi / pi.sum()


def reachable_from(q: np.ndarray, start: int = 0) -> np.ndarray:
    """Sorted indices of states reachable from ``start``."""
    off = np.array(q, dtype=float, copy=True)
    np.fill_diagonal(off, 0.0)
    order = csgraph.breadth_first_order(csr_matrix(off > 0), start,
                                        directed=True, return_predecessors=False)
    return np.sort(order)


def is_irreducible(q: np.ndarray) -> bool:
    off = np.array(q, dtype=float, copy=True)
    np.fill_diagonal(off, 0.0)
    n_comp, _ = csgraph.connected_components(csr_matrix(off > 0), directed=True,
                                             connection="strong")
    return n_comp == 1


def solve_stationary(q, tol: float = 1e-10) -> StationaryDistribution:
    """Stationary distribution of the class reachable from the empty buffer.

    ``q`` is a :class:`RateMatrix` or a bare generator array (then index 0
    plays the role of the empty state). States outside the reachable class
    get probability zero, which covers B-TSP states with ``i > R`` and the
    single-class chains obtained with a zero arrival rate.

    Raises :class:`SolverError` if the reachable class is not strongly
    connected or if ``max |pQ|`` exceeds ``tol`` times the largest exit rate
    (floored at 1).
    """
    if isinstance(q, RateMatrix):
        mat, space = q.q, q.space
    else:
        mat, space = np.asarray(q, dtype=float), None
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"generator must be square, got shape {mat.shape}")

    keep = reachable_from(mat, 0)
    sub = mat[np.ix_(keep, keep)]
    if not is_irreducible(sub):
        raise SolverError("reachable set is not a single communicating class",
                          dimension=len(keep))

    p = np.zeros(n)
    p[keep] = gth(sub)

    residual = float(np.abs(p @ mat).max())
    scale = max(1.0, float(np.abs(np.diag(mat)).max()))
    if not np.isfinite(residual) or residual > tol * scale:
        raise SolverError("stationary residual above tolerance",
                          residual=residual, dimension=n)
    if space is None:
        space = _space_for_size(n)
    return StationaryDistribution(p, space, residual)


def _space_for_size(n: int):
    # Bare arrays of triangular size get a matching state space; others get none.
    cap = int(round((np.sqrt(8 * n + 1) - 3) / 2))
    if cap >= 1 and (cap + 1) * (cap + 2) // 2 == n:
        return StateSpace(cap)
    return None


def solve(params: SystemParams, scheme) -> StationaryDistribution:
    return solve_stationary(build_generator(params, scheme))


def dump_matrix(array: np.ndarray, path) -> Path:
    """Write one row per line, space-separated, full double precision."""
    path = Path(path)
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    np.savetxt(path, arr, fmt="%.17g", delimiter=" ")
    return path


def load_matrix(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)
