"""Optimality certification via the maximum principle and brute force.

A candidate policy is certified by exhibiting multipliers
(lambda1..lambda4, mu1..mu4) such that

  * complementary slackness holds: lambda1*N = lambda2*D = lambda3*S =
    lambda4*(S - S_max) = 0 along the trajectory, the terminal products
    mu_i * g_i(X(T)) vanish, and all multipliers are nonnegative;
  * the costates solved backward from the transversality conditions
    make the policy maximize the Hamiltonian pointwise.

The Hamiltonian is linear and separable in the controls,

    H = theta_u*u + theta_v*v + theta_w*w - B*psi1 + r*D*psi2 - alpha*S*psi3
    theta_u = -K*psi1 + A*psi2 + psi3
    theta_v = -psi1 - psi2
    theta_w = p*psi1 - psi3

so each control component must sit at the bound selected by the sign of
its switching value; where a switching value vanishes identically the
component is singular (any admissible value maximizes H) and is flagged
rather than failed.

An independent exhaustive search over gridded bang-bang policies
(brute_force_best) provides the final dominance check: no feasible
candidate may beat the closed-form optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import (
    AdjointTrajectory,
    ExpTerm,
    PiecewiseExpFn,
    Trajectory,
    integrate_exact,
    piecewise_from_spans,
)
from .model import (
    ControlSegment,
    ControlValue,
    ModelParams,
    NoFeasibleCandidateError,
    PiecewiseControl,
    ScenarioKind,
    State,
)
from .solver import SwitchingTimes

#: Default absolute tolerance for certification checks.
CERT_TOL = 1e-9


@dataclass(frozen=True)
class MultiplierSet:
    """Constraint multipliers: four functions of time and four scalars.

    Every lambda is nonnegative and piecewise constant-or-exponential;
    pointwise products with the paired constraint values must vanish
    along the certified trajectory.
    """

    lambda1: PiecewiseExpFn
    lambda2: PiecewiseExpFn
    lambda3: PiecewiseExpFn
    lambda4: PiecewiseExpFn
    mu1: float
    mu2: float
    mu3: float
    mu4: float

    @property
    def mus(self) -> tuple[float, float, float, float]:
        return (self.mu1, self.mu2, self.mu3, self.mu4)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        cuts: set[float] = set()
        for lam in (self.lambda1, self.lambda2, self.lambda3, self.lambda4):
            cuts.update(lam.breakpoints)
        return tuple(sorted(cuts))


@dataclass(frozen=True)
class SwitchingValues:
    theta_u: float
    theta_v: float
    theta_w: float


class CertViolation(NamedTuple):
    time: float
    check: str
    magnitude: float


class SingularSegment(NamedTuple):
    component: str
    t_start: float
    t_end: float


@dataclass(frozen=True)
class CertReport:
    passed: bool
    violations: tuple[CertViolation, ...] = ()
    singular_segments: tuple[SingularSegment, ...] = ()


def switching_from_psi(
    params: ModelParams, psi: tuple[float, float, float]
) -> SwitchingValues:
    psi1, psi2, psi3 = psi
    return SwitchingValues(
        theta_u=-params.K * psi1 + params.A * psi2 + psi3,
        theta_v=-psi1 - psi2,
        theta_w=params.p * psi1 - psi3,
    )


def switching_values(
    params: ModelParams, adjoint: AdjointTrajectory, t: float
) -> SwitchingValues:
    """Evaluate the three switching functions at time t."""
    return switching_from_psi(params, adjoint.value_at(t))


def hamiltonian(
    params: ModelParams,
    psi: tuple[float, float, float],
    state: State,
    control: ControlValue,
) -> float:
    """H(psi, X, U); linear in the control components."""
    theta = switching_from_psi(params, psi)
    return (
        theta.theta_u * control.u
        + theta.theta_v * control.v
        + theta.theta_w * control.w
        - params.B * psi[0]
        + params.r * state.D * psi[1]
        - params.alpha * state.S * psi[2]
    )


def _check_grid(T: float, breakpoints: Sequence[float]) -> list[float]:
    """Dense uniform grid plus breakpoints nudged to either side.

    All certified functions are piecewise exponential with few
    breakpoints, so a coarse uniform grid refined at the breakpoints is
    exhaustive in practice.
    """
    pts = {0.0, T}
    n = 10 * max(1, math.ceil(T))
    for k in range(n + 1):
        pts.add(min(T, k * T / n) if n else 0.0)
    for b in breakpoints:
        for t in (b - 1e-9, b, b + 1e-9):
            if 0.0 <= t <= T:
                pts.add(t)
    return sorted(pts)


def multiplier_set_for_scenario(
    params: ModelParams, kind: ScenarioKind, times: SwitchingTimes
) -> MultiplierSet:
    """The multiplier set certifying a scenario's synthesized policy.

    Writing s for the production start (t_S, absent when the stock
    outlasts the horizon) and m for the debt-clearance time (0 in the
    no-debt scenarios, absent when repayment cannot finish by T):

      lambda2 = r on [m, T], 0 before      (keeps psi2 = -1 after m)
      lambda1 = r*exp(r*(m-t)) on [0, m)   (partial-repayment case only,
                                            keeps psi1 = -psi2 while N = 0)
      lambda3 = 0 while stock remains; alpha*(A+K) once production runs
                debt-free.  On a stretch [s, m) where production runs
                while debt is still outstanding, psi2 = -exp(r*(m-t)) is
                not yet constant and keeping theta_u = 0 requires
                  alpha*K + (alpha+r)*A*exp(r*(m-t))          (v_max regimes)
                  (alpha+r)*(A+K)*exp(r*(m-t))                (partial repayment)
      mu3 = A + K when the stock empties by T, else 0; all other mus 0.

    Anchors fall back to T when the debt persists through the horizon.
    """
    T = params.T
    a_, k_, r_, al = params.A, params.K, params.r, params.alpha
    s = times.t_s if times.t_s_within_horizon else None
    if kind in (ScenarioKind.S1_NO_DEBT_WITH_STOCK, ScenarioKind.A1_TOTAL_REPAYMENT_JUMP):
        m: float | None = 0.0
    else:
        m = times.t_d if times.t_d_within_horizon else None
    anchor = m if m is not None else T

    zero = PiecewiseExpFn.zero(0.0, T)

    if kind is ScenarioKind.A2_PARTIAL_REPAYMENT_JUMP:
        lam1 = piecewise_from_spans(
            [
                (0.0, anchor, (ExpTerm(r_, -r_, anchor),)),
                (anchor, T, ()),
            ]
        )
    else:
        lam1 = zero

    if m is not None:
        lam2 = piecewise_from_spans([(0.0, m, ()), (m, T, (ExpTerm(r_, 0.0),))])
    else:
        lam2 = zero

    if s is None:
        lam3 = zero
        mu3 = a_ + k_ if times.t_s <= T else 0.0
    else:
        const = ExpTerm(al * (a_ + k_), 0.0)
        spans: list[tuple[float, float, tuple[ExpTerm, ...]]] = [(0.0, s, ())]
        if m is not None and m <= s:
            spans.append((s, T, (const,)))
        else:
            if kind is ScenarioKind.A2_PARTIAL_REPAYMENT_JUMP:
                indebted = (ExpTerm((al + r_) * (a_ + k_), -r_, anchor),)
            else:
                indebted = (
                    ExpTerm(al * k_, 0.0),
                    ExpTerm((al + r_) * a_, -r_, anchor),
                )
            spans.append((s, anchor, indebted))
            if m is not None:
                spans.append((m, T, (const,)))
        lam3 = piecewise_from_spans(spans)
        mu3 = a_ + k_

    return MultiplierSet(
        lambda1=lam1,
        lambda2=lam2,
        lambda3=lam3,
        lambda4=zero,
        mu1=0.0,
        mu2=0.0,
        mu3=mu3,
        mu4=0.0,
    )


def check_slackness(
    mults: MultiplierSet, traj: Trajectory, tol: float = CERT_TOL
) -> CertReport:
    """Verify complementary slackness and multiplier nonnegativity.

    Checked on a dense grid plus all breakpoints: lambda1*N, lambda2*D,
    lambda3*S and lambda4*(S - S_max) must vanish within tol, as must
    the four terminal products; every lambda value and mu must be
    nonnegative.
    """
    T = traj.t_final
    grid = _check_grid(T, tuple(mults.breakpoints) + traj.breakpoints)
    scale = max(
        1.0,
        abs(traj.sample(0.0).N),
        abs(traj.sample(0.0).D),
        abs(traj.sample(0.0).S),
        traj.params.S_max,
    )
    bad: list[CertViolation] = []
    lams = (mults.lambda1, mults.lambda2, mults.lambda3, mults.lambda4)
    for t in grid:
        st = traj.sample(t)
        gvals = (st.N, st.D, st.S, st.S - traj.params.S_max)
        for i, (lam, g) in enumerate(zip(lams, gvals), start=1):
            lv = lam.value(t)
            if lv < -tol:
                bad.append(CertViolation(t, f"lambda{i}>=0", -lv))
            prod = lv * g
            if abs(prod) > tol * scale:
                bad.append(CertViolation(t, f"lambda{i}*g{i}=0", abs(prod)))
    final = traj.terminal_state()
    gfin = (final.N, final.D, final.S, final.S - traj.params.S_max)
    for i, (mu, g) in enumerate(zip(mults.mus, gfin), start=1):
        if mu < 0.0:
            bad.append(CertViolation(T, f"mu{i}>=0", -mu))
        if abs(mu * g) > tol * scale:
            bad.append(CertViolation(T, f"mu{i}*g{i}(T)=0", abs(mu * g)))
    return CertReport(passed=not bad, violations=tuple(bad))


def check_transversality(
    mults: MultiplierSet, adjoint: AdjointTrajectory
) -> CertReport:
    """psi1(T) = mu1 + 1, psi2(T) = mu2 - 1, psi3(T) = mu3 - mu4, exactly."""
    T = adjoint.psi1.t_final
    want = (mults.mu1 + 1.0, mults.mu2 - 1.0, mults.mu3 - mults.mu4)
    got = adjoint.value_at(T)
    bad = tuple(
        CertViolation(T, f"psi{i}(T)", abs(g - w))
        for i, (g, w) in enumerate(zip(got, want), start=1)
        if g != w
    )
    return CertReport(passed=not bad, violations=bad)


def check_control_maximizes(
    params: ModelParams,
    adjoint: AdjointTrajectory,
    policy: PiecewiseControl,
    tol: float = CERT_TOL,
) -> CertReport:
    """Check the policy against the box argmax of the Hamiltonian.

    At each grid time and for each component: a positive switching value
    demands the upper bound, a negative one demands zero, and
    |theta| <= tol * max(1, p) leaves the component singular there
    (any admissible value maximizes H).  Consecutive singular times are
    merged into reported singular segments.
    """
    T = policy.horizon
    grid = _check_grid(
        T, tuple(adjoint.breakpoints) + tuple(policy.breakpoints)
    )
    theta_tol = tol * max(1.0, params.p)
    spacing = T / (10 * max(1, math.ceil(T))) if T > 0.0 else 1.0
    bounds = {"u": params.u_max, "v": params.v_max, "w": params.w_max}
    bad: list[CertViolation] = []
    singular: dict[str, list[list[float]]] = {"u": [], "v": [], "w": []}
    for t in grid:
        theta = switching_values(params, adjoint, t)
        control = policy.value_at(t)
        for comp, th, actual in (
            ("u", theta.theta_u, control.u),
            ("v", theta.theta_v, control.v),
            ("w", theta.theta_w, control.w),
        ):
            if abs(th) <= theta_tol:
                runs = singular[comp]
                if runs and t - runs[-1][1] <= 2.0 * spacing + 1e-9:
                    runs[-1][1] = t
                else:
                    runs.append([t, t])
                continue
            target = bounds[comp] if th > 0.0 else 0.0
            if abs(actual - target) > 1e-9 * max(1.0, bounds[comp]):
                bad.append(CertViolation(t, f"argmax_{comp}", abs(actual - target)))
    segs = tuple(
        SingularSegment(comp, run[0], run[1])
        for comp in ("u", "v", "w")
        for run in singular[comp]
    )
    return CertReport(passed=not bad, violations=tuple(bad), singular_segments=segs)


# ---------------------------------------------------------------------------
# Exhaustive bang-bang search (independent optimality oracle)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BruteForceGrid:
    """Search space: switch times on a uniform n_t-interval grid, control
    levels per component (defaults: the box bounds plus the operating
    values 0/w_max/u_max, 0/A*w_max/v_max, 0/w_max)."""

    n_t: int = 200
    u_levels: tuple[float, ...] | None = None
    v_levels: tuple[float, ...] | None = None
    w_levels: tuple[float, ...] | None = None

    def levels(self, params: ModelParams) -> tuple[tuple[float, ...], ...]:
        u = self.u_levels or tuple(sorted({0.0, params.w_max, params.u_max}))
        v = self.v_levels or tuple(
            sorted({0.0, params.A * params.w_max, params.v_max})
        )
        w = self.w_levels or tuple(sorted({0.0, params.w_max}))
        return (u, v, w)


def _policy_from_candidate(
    T: float,
    t_a: float,
    t_b: float,
    levels: tuple[tuple[float, float, float], ...],
) -> PiecewiseControl:
    useq, vseq, wseq = levels
    cuts = [t for t in (t_a, t_b) if 0.0 < t < T]
    segs = []
    bounds = [0.0, *dict.fromkeys(cuts), T]
    # map each surviving interval to its level slot (degenerate ones skipped)
    slots = []
    raw_bounds = [0.0, t_a, t_b, T]
    for i in range(3):
        if raw_bounds[i + 1] > raw_bounds[i]:
            slots.append(i)
    for (a, b), slot in zip(zip(bounds[:-1], bounds[1:]), slots):
        segs.append(ControlSegment(a, b, ControlValue(useq[slot], vseq[slot], wseq[slot])))
    return PiecewiseControl(tuple(segs)).merged()


def _candidate_key(policy: PiecewiseControl) -> tuple:
    """Deterministic tie-break key: earliest first switch, then levels."""
    bp = policy.breakpoints
    first = bp[0] if bp else math.inf
    flat = tuple(
        (seg.t_start, seg.value.u, seg.value.v, seg.value.w)
        for seg in policy.segments
    )
    return (first, flat)


def brute_force_best(
    params: ModelParams,
    init: State,
    grid: BruteForceGrid = BruteForceGrid(),
) -> tuple[PiecewiseControl, float]:
    """Exhaustively search gridded bang-bang policies for the best value.

    Candidates are piecewise-constant on at most three intervals whose
    two cut times range over the uniform grid k*T/n_t (k = 1..n_t-1,
    coincident cuts giving single-switch and constant policies), with
    each component drawing its per-interval level from its level list.
    Every optimal policy shape of this model (at most two switching
    times shared across components) lies in this class.

    Trajectories violating a state constraint are discarded.  Exact
    segment propagation, vectorized over candidates; evaluation order is
    deterministic and exact objective ties are broken by earliest first
    switch, then lexicographic levels.  Raises NoFeasibleCandidateError
    when nothing feasible exists.
    """
    if grid.n_t < 1:
        raise ValueError("n_t must be at least 1")
    T = params.T
    if T <= 0.0:
        raise ValueError("brute force needs a positive horizon")
    u_levels, v_levels, w_levels = grid.levels(params)
    useq = np.array(list(itertools.product(u_levels, repeat=3)))
    vseq = np.array(list(itertools.product(v_levels, repeat=3)))
    wseq = np.array(list(itertools.product(w_levels, repeat=3)))
    nu, nv, nw = len(useq), len(vseq), len(wseq)
    iu = np.repeat(np.arange(nu), nv * nw)
    iv = np.tile(np.repeat(np.arange(nv), nw), nu)
    iw = np.tile(np.arange(nw), nu * nv)
    U = useq[iu]  # (M, 3)
    V = vseq[iv]
    W = wseq[iw]
    M = U.shape[0]

    p, r, A, al, K, B = params.p, params.r, params.A, params.alpha, params.K, params.B
    slopes = p * W - V - K * U - B  # (M, 3)
    cin = A * U - V
    qin = U - W
    ftol = 1e-9 * max(1.0, init.N, init.D, init.S, params.S_max)
    s_hi = params.S_max + ftol

    cut_times = np.array([k * T / grid.n_t for k in range(1, grid.n_t)])
    if cut_times.size == 0:
        cut_times = np.array([0.0])

    best_value = -math.inf
    best_key: tuple | None = None
    best_policy: PiecewiseControl | None = None

    def propagate(N0, D0, S0, dt, col):
        """Exact segment step; dt broadcasts against the combo axis."""
        er = np.exp(r * dt)
        em1r = np.expm1(r * dt) / r
        ea = np.exp(-al * dt)
        em1a = np.expm1(-al * dt) / al
        N1 = N0 + slopes[:, col] * dt
        D1 = D0 * er + cin[:, col] * em1r
        S1 = S0 * ea - qin[:, col] * em1a
        return N1, D1, S1

    for i, t_a in enumerate(cut_times):
        N1, D1, S1 = propagate(init.N, init.D, init.S, t_a, 0)
        ok1 = (N1 >= -ftol) & (D1 >= -ftol) & (S1 >= -ftol) & (S1 <= s_hi)
        tb = cut_times[i:]
        d2 = (tb - t_a)[:, None]
        d3 = (T - tb)[:, None]
        N2, D2, S2 = propagate(N1[None, :], D1[None, :], S1[None, :], d2, 1)
        N3, D3, S3 = propagate(N2, D2, S2, d3, 2)
        feasible = (
            ok1[None, :]
            & (N2 >= -ftol) & (D2 >= -ftol) & (S2 >= -ftol) & (S2 <= s_hi)
            & (N3 >= -ftol) & (D3 >= -ftol) & (S3 >= -ftol) & (S3 <= s_hi)
        )
        value = np.where(feasible, N3 - D3, -np.inf)
        chunk_best = value.max()
        if chunk_best == -math.inf or chunk_best < best_value:
            continue
        rows, cols = np.nonzero(value == chunk_best)
        for j_idx, m_idx in zip(rows.tolist(), cols.tolist()):
            levels = (
                tuple(U[m_idx]),
                tuple(V[m_idx]),
                tuple(W[m_idx]),
            )
            policy = _policy_from_candidate(T, float(t_a), float(tb[j_idx]), levels)
            key = _candidate_key(policy)
            if chunk_best > best_value or best_key is None or key < best_key:
                best_value = float(chunk_best)
                best_key = key
                best_policy = policy
    if best_policy is None:
        raise NoFeasibleCandidateError(
            "no feasible piecewise-constant candidate on the search grid"
        )
    return best_policy, best_value


# ---------------------------------------------------------------------------
# One-call certification bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Certification:
    slackness: CertReport
    transversality: CertReport
    hamiltonian_argmax: CertReport
    multipliers_nonnegative: bool

    @property
    def passed(self) -> bool:
        return (
            self.slackness.passed
            and self.transversality.passed
            and self.hamiltonian_argmax.passed
            and self.multipliers_nonnegative
        )


def certify_policy(
    params: ModelParams,
    init: State,
    kind: ScenarioKind,
    tol: float = CERT_TOL,
) -> Certification:
    """Run the full maximum-principle certification for a scenario."""
    from . import solver
    from .dynamics import adjoint_backward

    synth = solver.synthesize_policy(params, init, kind)
    start = synth.jump.post_state if synth.jump is not None else init
    zeros = []
    if synth.times.t_s_within_horizon and synth.times.t_s > 0.0:
        zeros.append((synth.times.t_s, "S"))
    if (
        synth.times.t_d is not None
        and synth.times.t_d_within_horizon
        and synth.times.t_d > 0.0
    ):
        zeros.append((synth.times.t_d, "D"))
    traj = integrate_exact(
        params, start, synth.policy, jump=synth.jump, expected_zeros=zeros
    )
    mults = multiplier_set_for_scenario(params, kind, synth.times)
    adjoint = adjoint_backward(params, mults)
    grid = _check_grid(params.T, mults.breakpoints)
    nonneg = all(
        lam.nonnegative_on_grid(grid)
        for lam in (mults.lambda1, mults.lambda2, mults.lambda3, mults.lambda4)
    ) and all(mu >= 0.0 for mu in mults.mus)
    return Certification(
        slackness=check_slackness(mults, traj, tol),
        transversality=check_transversality(mults, adjoint),
        hamiltonian_argmax=check_control_maximizes(params, adjoint, synth.policy, tol),
        multipliers_nonnegative=nonneg,
    )
