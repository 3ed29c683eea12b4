"""Independent reference oracles used to derive expected test values.

These deliberately avoid the package's own integrators: trajectories are
integrated with scipy's adaptive RK at tight tolerances and event times
located by plain bisection, so agreement with the closed forms is a
genuine two-sided check.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from firmopt import ModelParams, State


def reference_integrate(
    params: ModelParams,
    init: State,
    control_fn: Callable[[float], tuple[float, float, float]],
    breakpoints: Sequence[float],
) -> Callable[[float], np.ndarray]:
    """Dense reference solution of the state ODEs under a control law.

    Integrates segment by segment between the supplied breakpoints so the
    discontinuous control never crosses an integration step.  Returns a
    callable t -> [N, D, S].
    """

    def rhs(t: float, y: np.ndarray) -> list[float]:
        n, d, s = y
        u, v, w = control_fn(t)
        return [
            params.p * w - v - params.K * u - params.B,
            params.r * d + params.A * u - v,
            u - w - params.alpha * s,
        ]

    cuts = sorted({0.0, params.T, *[b for b in breakpoints if 0.0 < b < params.T]})
    pieces = []
    y = np.array([init.N, init.D, init.S], dtype=float)
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid_control = control_fn(0.5 * (a + b))
        sol = solve_ivp(
            lambda t, yy: rhs_fixed(t, yy, mid_control, params),
            (a, b),
            y,
            method="DOP853",
            rtol=1e-12,
            atol=1e-13,
            dense_output=True,
        )
        pieces.append((a, b, sol.sol))
        y = sol.y[:, -1]

    def sample(t: float) -> np.ndarray:
        for a, b, interp in pieces:
            if t <= b or (a, b, interp) is pieces[-1]:
                if t >= a:
                    return interp(t)
        raise ValueError(f"t = {t} out of range")

    return sample


def rhs_fixed(t, y, control, params: ModelParams):
    n, d, s = y
    u, v, w = control
    return [
        params.p * w - v - params.K * u - params.B,
        params.r * d + params.A * u - v,
        u - w - params.alpha * s,
    ]


def bisect_root(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-13) -> float:
    """Bisection for a sign change of fn on [lo, hi]."""
    f_lo = fn(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if abs(f_mid) <= tol or hi - lo <= tol * max(1.0, abs(mid)):
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
