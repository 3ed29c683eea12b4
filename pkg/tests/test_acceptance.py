"""Acceptance suite: one test per criterion clause, each printing a
PASS/FAIL line (run with -s to see them inline).

Four assertions in this module pin reference constants that are
mathematically inconsistent with the exact dynamics and fail by design;
each carries a comment deriving the inconsistency:

  * the quoted partial-repayment switching time 0.224743 (its own quoted
    expression 10*ln(45/44) evaluates to 0.2247286),
  * the quoted debt-scenario objectives 232.7133 / 212.9284 (they deduct
    raw-material payments A*w_max on [t_D, t_S) while production is idle,
    which the debt dynamics cannot realize: the debt would go negative;
    the realized optima are larger by A*w_max*(t_S - t_D)),
  * the half-unit bracket for the n_t = 200 exhaustive search (the
    switch-time quantization loss is (A+K)*w_max * (t_S mod h) = 0.907
    at the reference point, already above 0.5),
  * the step-halving order check at step 1e-3 (both errors sit at the
    rounding floor ~1e-10 there, far below truncation visibility).
"""

import math
import random
import time
from dataclasses import replace

import pytest

from firmopt import (
    BruteForceGrid,
    ScenarioKind,
    State,
    brute_force_best,
    certify_policy,
    find_zero_crossing,
    integrate_exact,
    integrate_rk4,
    objective_value,
    synthesize_policy,
)
from firmopt.chain import chain_plan, evaluate_chain
from firmopt.solver import _objective_debt_no_stock, _objective_debt_with_stock
from firmopt import debt_clearance_time

from conftest import ALL_KINDS, BASELINE, draw_scenario_case

S1 = ScenarioKind.S1_NO_DEBT_WITH_STOCK
S2 = ScenarioKind.S2_DEBT_WITH_STOCK
S3 = ScenarioKind.S3_DEBT_NO_STOCK
A1 = ScenarioKind.A1_TOTAL_REPAYMENT_JUMP
A2 = ScenarioKind.A2_PARTIAL_REPAYMENT_JUMP

BASELINE_CASES = {
    S1: (State(20.0, 0.0, 10.0), False),
    S2: (State(20.0, 10.0, 10.0), False),
    S3: (State(20.0, 10.0, 0.0), False),
    A2: (State(20.0, 30.0, 10.0), True),
}


def report(criterion: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {criterion}: {status}{suffix}")


def synthesized_trajectory(params, init, kind):
    synth = synthesize_policy(params, init, kind)
    start = synth.jump.post_state if synth.jump else init
    zeros = []
    if synth.times.t_s_within_horizon and synth.times.t_s > 0:
        zeros.append((synth.times.t_s, "S"))
    if (
        synth.times.t_d is not None
        and synth.times.t_d_within_horizon
        and synth.times.t_d > 0
    ):
        zeros.append((synth.times.t_d, "D"))
    traj = integrate_exact(
        params, start, synth.policy, jump=synth.jump, expected_zeros=zeros
    )
    return synth, traj


# ---------------------------------------------------------------------------
# Criterion 1: switching-time agreement, tolerance 1e-8, runtime < 1 s
# ---------------------------------------------------------------------------


def test_c01_switching_times_agree_with_event_detection():
    started = time.perf_counter()
    worst = 0.0
    for kind, (init, _) in BASELINE_CASES.items():
        synth, traj = synthesized_trajectory(BASELINE, init, kind)
        if synth.times.t_s > 0.0 and synth.times.t_s_within_horizon:
            found = find_zero_crossing(traj, "S", (0.0, BASELINE.T))
            worst = max(worst, abs(found - synth.times.t_s))
        if synth.times.t_d is not None and synth.times.t_d_within_horizon:
            if synth.times.t_d > 0.0:
                found = find_zero_crossing(traj, "D", (0.0, BASELINE.T))
                worst = max(worst, abs(found - synth.times.t_d))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-8 and elapsed < 1.0
    report("C1 switching-time agreement", ok, f"worst {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-8
    assert elapsed < 1.0


def test_c01_baseline_switching_time_table():
    synths = {
        kind: synthesize_policy(BASELINE, init, kind)
        for kind, (init, _) in BASELINE_CASES.items()
    }
    rows = [
        (synths[S1].times.t_s, 1.386294, "stock depletion"),
        (synths[S2].times.t_d, 0.202027, "debt clearance, stocked"),
        (synths[S3].times.t_d, 0.253178, "debt clearance, no stock"),
        # reference row quotes 10*ln(45/44) as 0.224743; that expression
        # evaluates to 0.2247286, so this row cannot match
        (synths[A2].times.t_d, 0.224743, "debt clearance, partial repayment"),
    ]
    failures = [
        (label, got, want) for got, want, label in rows if abs(got - want) > 5e-7
    ]
    report("C1 baseline switching-time table", not failures, str(failures))
    assert not failures, failures


# ---------------------------------------------------------------------------
# Criterion 2: objective agreement, 1e-9 relative, 1000 draws, < 10 s
# ---------------------------------------------------------------------------


def test_c02_objective_formulas_match_integration():
    started = time.perf_counter()
    worst = 0.0
    for kind, (init, _) in BASELINE_CASES.items():
        _, traj = synthesized_trajectory(BASELINE, init, kind)
        value = objective_value(BASELINE, init, kind)
        worst = max(worst, abs(value - traj.objective()) / max(1.0, abs(value)))
    rng = random.Random(20240811)
    per_kind = 200  # 5 scenarios x 200 = 1000 draws
    for kind in ALL_KINDS:
        for _ in range(per_kind):
            params, init = draw_scenario_case(rng, kind)
            _, traj = synthesized_trajectory(params, init, kind)
            value = objective_value(params, init, kind)
            worst = max(worst, abs(value - traj.objective()) / max(1.0, abs(value)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-9 and elapsed < 10.0
    report("C2 objective agreement", ok, f"worst rel {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_c02_baseline_objective_table():
    rows = [
        (S1, 254.6573),
        # the 232.7133 and 212.9284 rows assume the pre-production
        # interval [t_D, t_S) still pays A*w_max for raw materials; the
        # debt dynamics turn that payment into D < 0 (infeasible), and
        # the realized optimal values are A*w_max*(t_S - t_D) higher
        (S2, 232.7133),
        (S3, 209.8729),
        (A2, 212.9284),
    ]
    failures = []
    for kind, want in rows:
        init, _ = BASELINE_CASES[kind]
        got = objective_value(BASELINE, init, kind)
        if abs(got - want) > 1e-4:
            failures.append((kind.value, got, want))
    report("C2 baseline objective table", not failures, str(failures))
    assert not failures, failures


# ---------------------------------------------------------------------------
# Criterion 3: maximum-principle certification, 200 draws each, < 30 s
# ---------------------------------------------------------------------------


def test_c03_maximum_principle_certification():
    started = time.perf_counter()
    rng = random.Random(3141)
    bad = []
    for kind in ALL_KINDS:
        for _ in range(200):
            params, init = draw_scenario_case(rng, kind)
            cert = certify_policy(params, init, kind, tol=1e-9)
            if not (
                cert.multipliers_nonnegative
                and cert.slackness.passed
                and cert.transversality.passed
                and cert.hamiltonian_argmax.passed
            ):
                bad.append((kind.value, params, init))
    elapsed = time.perf_counter() - started
    ok = not bad and elapsed < 30.0
    report("C3 maximum-principle certification", ok, f"{elapsed:.1f}s")
    assert not bad, bad[:2]
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# Criterion 4: brute-force dominance at n_t = 200, < 5 min
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def brute_results():
    started = time.perf_counter()
    results = {}
    for kind, (init, _) in BASELINE_CASES.items():
        synth = synthesize_policy(BASELINE, init, kind)
        start = synth.jump.post_state if synth.jump else init
        _, best = brute_force_best(BASELINE, start, BruteForceGrid(n_t=200))
        results[kind] = (best, objective_value(BASELINE, init, kind))
    return results, time.perf_counter() - started


def test_c04_brute_force_never_beats_closed_form(brute_results):
    results, elapsed = brute_results
    failures = [
        (kind.value, best, closed)
        for kind, (best, closed) in results.items()
        if best > closed + 1e-4
    ]
    ok = not failures and elapsed < 300.0
    report("C4 exhaustive-search dominance", ok, f"search {elapsed:.0f}s")
    assert not failures, failures
    assert elapsed < 300.0


def test_c04_brute_force_reaches_within_half_unit(brute_results):
    # the coarsest loss of moving the production start to the grid is
    # (A+K)*w_max * (t_S mod h) = 25 * 0.0363 = 0.907 at h = T/200, so
    # a 0.5 bracket is not reachable for the stocked scenarios
    results, _ = brute_results
    failures = [
        (kind.value, best, closed)
        for kind, (best, closed) in results.items()
        if best < closed - 0.5
    ]
    report("C4 exhaustive-search half-unit bracket", not failures, str(failures))
    assert not failures, failures


# ---------------------------------------------------------------------------
# Criterion 5: no-stock reduction identities over 1000 draws
# ---------------------------------------------------------------------------


def test_c05_no_stock_reduction_identities():
    from conftest import draw_profitable_params

    rng = random.Random(555)
    for _ in range(1000):
        params = draw_profitable_params(rng)
        cap = 0.9 * (params.v_max - params.A * params.w_max) / params.r
        debt0 = rng.uniform(0.01, cap)
        stocked = debt_clearance_time(params, debt0, 0.0, S2)
        no_stock = debt_clearance_time(params, debt0, 0.0, S3)
        assert stocked.time == no_stock.time
        if math.isfinite(stocked.time):
            cash0 = rng.uniform(0.1, 100.0)
            assert _objective_debt_with_stock(
                params, cash0, stocked.time, 0.0
            ) == _objective_debt_no_stock(params, cash0, stocked.time)
    report("C5 no-stock reduction identities", True)


# ---------------------------------------------------------------------------
# Criterion 6: unbounded-repayment limit, 1e-3 at v_max = 1e6, monotone
# ---------------------------------------------------------------------------


def test_c06_unbounded_repayment_limit():
    init = State(20.0, 10.0, 10.0)
    target = objective_value(BASELINE, init, A1)
    gaps = []
    for v_max in (1e2, 1e3, 1e4, 1e5, 1e6):
        params = replace(BASELINE, v_max=v_max)
        gaps.append(abs(objective_value(params, init, S2) - target))
    monotone = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = monotone and gaps[-1] < 1e-3
    report("C6 unbounded-repayment limit", ok, f"gaps {[f'{g:.1e}' for g in gaps]}")
    assert monotone
    assert gaps[-1] < 1e-3


# ---------------------------------------------------------------------------
# Criterion 7: partial-repayment value positivity over 1000 draws
# ---------------------------------------------------------------------------


def test_c07_partial_repayment_value_positive():
    rng = random.Random(777)
    for _ in range(1000):
        params, init = draw_scenario_case(rng, A2, require_t_d_within=True)
        assert objective_value(params, init, A2) > 0.0
    report("C7 partial-repayment positivity", True)


# ---------------------------------------------------------------------------
# Criterion 8: RK4 oracle, 1e-7 sup-norm at step 1e-3; halving order
# ---------------------------------------------------------------------------


def _sup_error(params, init, kind, step):
    synth = synthesize_policy(params, init, kind)
    start = synth.jump.post_state if synth.jump else init
    zeros = []
    if synth.times.t_s_within_horizon and synth.times.t_s > 0:
        zeros.append((synth.times.t_s, "S"))
    if (
        synth.times.t_d is not None
        and synth.times.t_d_within_horizon
        and synth.times.t_d > 0
    ):
        zeros.append((synth.times.t_d, "D"))
    exact = integrate_exact(params, start, synth.policy, expected_zeros=zeros)
    rk = integrate_rk4(params, start, synth.policy, step=step)
    return max(
        max(
            abs(s.N - exact.sample(t).N),
            abs(s.D - exact.sample(t).D),
            abs(s.S - exact.sample(t).S),
        )
        for t, s in zip(rk.times, rk.states)
    )


def test_c08_rk4_matches_exact_within_tolerance():
    worst = max(
        _sup_error(BASELINE, init, kind, 1e-3)
        for kind, (init, _) in BASELINE_CASES.items()
    )
    ok = worst <= 1e-7
    report("C8 RK4 sup-norm agreement", ok, f"worst {worst:.2e}")
    assert worst <= 1e-7


def test_c08_rk4_halving_improves_by_factor_12():
    # at step 1e-3 the discrepancy is float rounding, orders of magnitude
    # above truncation, so halving the step cannot show the order-4 gain
    # (the order is measurable at coarser steps, see the dynamics tests)
    ratios = {}
    for kind, (init, _) in BASELINE_CASES.items():
        e1 = _sup_error(BASELINE, init, kind, 1e-3)
        e2 = _sup_error(BASELINE, init, kind, 5e-4)
        ratios[kind.value] = e1 / e2
    ok = all(ratio >= 12.0 for ratio in ratios.values())
    report(
        "C8 RK4 halving order check",
        ok,
        ", ".join(f"{k}: {v:.2f}x" for k, v in ratios.items()),
    )
    assert ok, ratios


# ---------------------------------------------------------------------------
# Criterion 9: chain split consistency
# ---------------------------------------------------------------------------


def test_c09_chain_split_matches_unsplit_solve():
    init = State(20.0, 0.0, 10.0)
    solve_value = objective_value(BASELINE, init, S1)
    plan = chain_plan(BASELINE, init, [0.0, 5.0, BASELINE.T])
    _, chain_value = evaluate_chain(BASELINE, plan)
    diff = abs(chain_value - solve_value)
    # exact closed forms on both sides; 1e-12 absorbs re-associated
    # floating-point rounding only
    ok = diff <= 1e-12
    report("C9 chain split consistency", ok, f"diff {diff:.2e}")
    assert diff <= 1e-12
