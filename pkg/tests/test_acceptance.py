"""Exit criteria for the toolkit, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from oracles import dense_stationary, mm1k
from tspqos.ctmc import build_generator, solve_stationary
from tspqos.metrics import (
    loss_probabilities_closed_form,
    loss_probabilities_rate_based,
    qos_report,
)
from tspqos.policy import TABLE1, SchemeKind, SystemParams
from tspqos.sim import SimConfig, qos_from_sim, run_simulation, within_standard_errors
from tspqos.sweep import SweepSpec, compare_schemes, run_sweep

EB, B = SchemeKind.EB_TSP, SchemeKind.B_TSP
SWEEP = [5.0 * k for k in range(1, 11)]
SIM_POINTS = [10.0, 20.0, 30.0, 40.0]
SIM_EVENTS = 10_000_000
SIM_SEED = 20260416


def random_small_instances(count=50, seed=1234):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 11))
        r = int(rng.integers(1, n + 1))
        lr, ln, mr, mn = rng.uniform(0.1, 60.0, size=4)
        out.append((SystemParams(n, r, lr, ln, mr, mn), EB if rng.random() < 0.5 else B))
    return out


def acceptance_matrix():
    points = [(SystemParams(lambda_rt=lam, **TABLE1), s) for lam in SWEEP for s in (EB, B)]
    return points + random_small_instances()


def test_c1_solver_validity(criterion):
    worst = dict(row=0.0, residual=0.0, norm=0.0, neg=0.0, seconds=0.0)
    for params, scheme in acceptance_matrix():
        t0 = time.perf_counter()
        q = build_generator(params, scheme)
        dist = solve_stationary(q)
        elapsed = time.perf_counter() - t0
        worst["row"] = max(worst["row"], np.abs(q.q.sum(axis=1)).max())
        worst["residual"] = max(worst["residual"], np.abs(dist.p @ q.q).max())
        worst["norm"] = max(worst["norm"], abs(dist.p.sum() - 1.0))
        worst["neg"] = min(worst["neg"], dist.p.min())
        if params.capacity_n == 60:
            worst["seconds"] = max(worst["seconds"], elapsed)
    ok = (worst["row"] <= 1e-12 and worst["residual"] <= 1e-10 and worst["norm"] <= 1e-12
          and worst["neg"] >= 0.0 and worst["seconds"] < 1.0)
    criterion("C1 solver validity", ok,
              f"max|row sum|={worst['row']:.1e} max|pQ|={worst['residual']:.1e} "
              f"|sum p-1|={worst['norm']:.1e} min p={worst['neg']:.1e} "
              f"slowest N=60 point={worst['seconds']:.3f}s")
    assert ok


def _oracle_dense(params, scheme):
    # Solve on the states the scheme can occupy, chosen without graph search.
    space_states = [(k - j, j) for k in range(params.capacity_n + 1) for j in range(k + 1)]
    q = build_generator(params, scheme).q
    keep = [x for x, (i, _) in enumerate(space_states)
            if scheme is EB or i <= params.threshold_r]
    p = np.zeros(len(space_states))
    p[keep] = dense_stationary(q[np.ix_(keep, keep)])
    return p


def test_c2_oracle_equivalence(criterion):
    rng = np.random.default_rng(77)
    worst = 0.0
    count = 0
    for n in range(1, 6):
        for r in range(1, n + 1):
            for scheme in (EB, B):
                for _ in range(3):
                    params = SystemParams(n, r, *rng.uniform(0.1, 60.0, size=4))
                    got = solve_stationary(build_generator(params, scheme)).p
                    worst = max(worst, np.abs(got - _oracle_dense(params, scheme)).max())
                    count += 1
    ok = worst <= 1e-10
    criterion("C2 elimination solver vs dense solve (N<=5)", ok,
              f"{count} instances, max |dp|={worst:.1e}")
    assert ok


def test_c3_degenerate_exactness(criterion):
    worst = 0.0
    cases = 0
    for n in (1, 3, 6, 10):
        for scheme in (EB, B):
            # NRT only: M/M/1/N whatever the scheme.
            params = SystemParams(n, max(1, n // 2), 0.0, 8.0, 30.0, 25.0)
            rep = qos_report(solve_stationary(build_generator(params, scheme)), params, scheme)
            _, block, mean, soj = mm1k(8.0, 25.0, n)
            assert rep.p_loss_rt is None and rep.d_rt is None
            worst = max(worst, abs(rep.p_loss_nrt - block), abs(rep.n_nrt - mean),
                        abs(rep.d_nrt - soj), abs(rep.n_rt))
            # RT only: M/M/1/N under EB-TSP, M/M/1/R under B-TSP.
            params = SystemParams(n, max(1, n // 2), 24.0, 0.0, 30.0, 25.0)
            rep = qos_report(solve_stationary(build_generator(params, scheme)), params, scheme)
            cap = n if scheme is EB else params.threshold_r
            _, block, mean, soj = mm1k(24.0, 30.0, cap)
            assert rep.p_loss_nrt is None and rep.d_nrt is None
            worst = max(worst, abs(rep.p_loss_rt - block), abs(rep.n_rt - mean),
                        abs(rep.d_rt - soj), abs(rep.n_nrt))
            cases += 2
    params = SystemParams(3, 1, 0.0, 8.0, 30.0, 25.0)
    blocking = qos_report(solve_stationary(build_generator(params, EB)), params, EB).p_loss_nrt
    ok = worst <= 1e-10 and abs(blocking - 0.0225184) <= 5e-8
    criterion("C3 degenerate M/M/1/N exactness", ok,
              f"{cases} cases, max error={worst:.1e}, N=3 blocking={blocking:.7f}")
    assert ok


def test_c4_route_equivalence(criterion):
    worst = 0.0
    count = 0
    points = [(p, s) for p, s in acceptance_matrix() if s is EB]
    points += [(p, EB) for p, s in random_small_instances(seed=99)]
    for params, _ in points:
        dist = solve_stationary(build_generator(params, EB))
        closed = loss_probabilities_closed_form(dist, params)
        rate = loss_probabilities_rate_based(dist, params, EB)
        worst = max(worst, abs(closed[0] - rate[0]), abs(closed[1] - rate[1]))
        count += 1
    ok = worst <= 1e-12
    criterion("C4 closed-form vs rate-based losses (EB-TSP)", ok,
              f"{count} points, max diff={worst:.1e}")
    assert ok


@pytest.fixture(scope="module")
def table1_sims():
    out = {}
    for lam in SIM_POINTS:
        params = SystemParams(lambda_rt=lam, **TABLE1)
        t0 = time.perf_counter()
        counters = run_simulation(SimConfig(params, EB, seed=SIM_SEED + int(lam),
                                            events=SIM_EVENTS))
        elapsed = time.perf_counter() - t0
        out[lam] = (params, counters, qos_from_sim(counters, params), elapsed)
    return out


def test_c5_analytic_vs_simulation(table1_sims, criterion):
    details, ok = [], True
    for lam, (params, counters, rep, elapsed) in table1_sims.items():
        exact = qos_report(solve_stationary(build_generator(params, EB)), params, EB)
        checks = [
            ("P_rt", rep.qos.p_loss_rt, exact.p_loss_rt, rep.se_p_loss_rt, rep.arrivals_rt),
            ("P_nrt", rep.qos.p_loss_nrt, exact.p_loss_nrt, rep.se_p_loss_nrt, rep.arrivals_nrt),
            ("N_rt", rep.qos.n_rt, exact.n_rt, rep.se_n_rt, None),
            ("N_nrt", rep.qos.n_nrt, exact.n_nrt, rep.se_n_nrt, None),
        ]
        zs = []
        for name, sim, ref, se, trials in checks:
            good = within_standard_errors(sim, ref, se, k=3.0, n_trials=trials)
            ok &= good
            mark = "" if good else "!"
            if se:
                zs.append(f"{name} z={(sim - ref) / se:+.2f}{mark}")
            else:
                zs.append(f"{name} no events (exact {ref:.1e}){mark}")
        ok &= elapsed < 60.0
        details.append(f"lam={lam:g} ({elapsed:.1f}s): " + ", ".join(zs))
    criterion("C5 analytic vs simulation within 3 SE", ok, "; ".join(details))
    assert ok


def test_c6_rt_loss_shape(criterion):
    rows = run_sweep(SweepSpec())
    eb = [r.p_loss_rt for r in rows if r.scheme == "eb-tsp"]
    b = [r.p_loss_rt for r in rows if r.scheme == "b-tsp"]
    dominated = all(x <= y for x, y in zip(eb, b))
    monotone = all(y >= x for x, y in zip(eb, eb[1:])) and all(y >= x for x, y in zip(b, b[1:]))
    gaps = [y - x for x, y in zip(eb, b)]
    growing = all(g2 >= g1 for g1, g2 in zip(gaps, gaps[1:]))
    ok = dominated and monotone and growing
    peak = SWEEP[int(np.argmax(gaps))]
    criterion("C6 RT loss shape (EB<=B, nondecreasing, growing gap)", ok,
              f"EB<=B: {dominated}, nondecreasing: {monotone}, gap growing: {growing} "
              f"(gap peaks at lambda_rt={peak:g}; gaps="
              + ", ".join(f"{g:.3g}" for g in gaps) + ")")
    assert dominated and monotone
    assert growing, "B-TSP minus EB-TSP RT loss gap shrinks past its peak"


def test_c7_nrt_and_delay_series_emitted(criterion):
    rows = run_sweep(SweepSpec())
    summary = compare_schemes(rows)
    emitted = all(r.d_rt is not None and r.d_nrt is not None and r.p_loss_nrt is not None
                  for r in rows)
    complete = len(summary.points) == len(SWEEP)
    rel = summary.max_relative
    ok = emitted and complete and all(rel[k] is not None for k in ("p_loss_nrt", "d_rt", "d_nrt"))
    criterion("C7 NRT loss and delay series emitted with max relative deviation", ok,
              ", ".join(f"max rel {k}={v:.3g}" for k, v in rel.items()))
    assert ok


def test_c8_simulator_self_consistency(table1_sims, criterion):
    details, ok = [], True
    for lam, (_, counters, rep, _) in table1_sims.items():
        gaps = {k: v for k, v in rep.little.items() if v is not None}
        good = bool(gaps) and all(v <= 0.02 for v in gaps.values())
        conserved = counters.conservation_holds()
        ok &= good and conserved
        details.append(f"lam={lam:g}: little max={max(gaps.values()):.2e}, "
                       f"conservation={'exact' if conserved else 'BROKEN'}")
    # B-TSP runs exercise the no-eviction path too.
    for lam in (20.0, 40.0):
        params = SystemParams(lambda_rt=lam, **TABLE1)
        counters = run_simulation(SimConfig(params, B, seed=SIM_SEED, events=2_000_000))
        rep = qos_from_sim(counters, params)
        gaps = [v for v in rep.little.values() if v is not None]
        ok &= all(v <= 0.02 for v in gaps) and counters.conservation_holds()
        details.append(f"b-tsp lam={lam:g}: little max={max(gaps):.2e}")
    criterion("C8 simulator Little's law (2%) and flow conservation", ok, "; ".join(details))
    assert ok

