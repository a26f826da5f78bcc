"""Discrete capacity ladder: expansion in N fixed increments.

Capacity moves on levels u_n = n/N with decay exponents gamma_n = gamma(u_n)
(strictly decreasing, terminal gamma_N > 1).  Backward from the top level,

    b_N = c_N,           A_N = (b_N - k) / G_N(b_N),
    f_n(b) = (gamma_n + k - 1) b - gamma_n k + (gamma_n - gamma_{n+1}) V_{n+1}(b),
    b_n = unique root of f_n in (0, c_n),
    A_n = (b_n - k + V_{n+1}(b_n)) / G_n(b_n),

with V_n(pi) = A_n G_n(pi) below b_n and (pi - k) + V_{n+1}(pi) above.
f_n(0+) = -gamma_n k < 0 and f_n(c_n) = (gamma_n - gamma_{n+1}) V_{n+1}(c_n) > 0,
so bisection brackets the root without derivatives.

The module also carries an independent cross-check: a brute-force value
iteration for the same recursion on a trinomial discretization of the belief
in log-odds space.  It shares no code with the closed-form assembly beyond
numpy, which is the point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np

from .model import ConfigError, ModelParams, RateSpec, SIGN_TOL, gamma as gamma_of

BISECT_F_TOL = 1e-13
# Fourth-order five-point second differences: at the 1e-8 residual tolerance a
# three-point stencil has no workable step (Taylor and roundoff floors cross
# above it), so the stencil half-width is 2 * GEN_FD_STEP and the kink band
# must clear it.
GEN_FD_STEP = 1e-3
GEN_KINK_BAND = 2.5e-3

TOL_BELLMAN = 1e-10
TOL_GENERATOR = 1e-8
TOL_SMOOTH_FIT = 1e-4


def _G(gamma_n: float, pi):
    pi = np.asarray(pi, dtype=float)
    return (1.0 - pi) * np.exp(gamma_n * (np.log(pi) - np.log1p(-pi)))


@dataclass(frozen=True)
class DiscreteLadder:
    """Solved ladder: thresholds b_n and coefficients A_n for n = 0..N."""

    gamma: np.ndarray
    k: float
    r: float
    b: np.ndarray
    A: np.ndarray
    c: np.ndarray

    @property
    def n_levels(self) -> int:
        """N: number of expansion steps remaining at level 0."""
        return self.gamma.size - 1

    @property
    def u_levels(self) -> np.ndarray:
        return np.arange(self.gamma.size) / max(self.n_levels, 1)

    def rho2(self, n: int) -> float:
        g = self.gamma[n]
        return 2.0 * self.r / (g * g - g)

    def value(self, n: int, pi):
        """V_n(pi) for pi in (0,1), vectorized; V_{N+1} identically 0."""
        scalar = np.isscalar(pi) or np.ndim(pi) == 0
        pi = np.atleast_1d(np.asarray(pi, dtype=float))
        if np.any(pi <= 0.0) or np.any(pi >= 1.0):
            raise ValueError("pi must lie strictly in (0, 1)")
        out = np.zeros(pi.shape, dtype=float)
        rem = np.ones(pi.shape, dtype=bool)
        for m in range(n, self.n_levels + 1):
            hold = rem & (pi < self.b[m])
            if np.any(hold):
                out[hold] += self.A[m] * _G(self.gamma[m], pi[hold])
                rem = rem & ~hold
            if not np.any(rem):
                break
            out[rem] += pi[rem] - self.k
        if scalar:
            return float(out[0])
        return out


def boundary_equation(ladder_tail: DiscreteLadder, n: int, b: float) -> float:
    """f_n(b) with the tail (levels n+1..N) of an already-solved ladder."""
    g = ladder_tail.gamma
    k = ladder_tail.k
    vnext = ladder_tail.value(n + 1, b) if n + 1 <= ladder_tail.n_levels else 0.0
    return (g[n] + k - 1.0) * b - g[n] * k + (g[n] - g[n + 1]) * float(vnext)


def solve_ladder(gamma: np.ndarray, params: ModelParams) -> DiscreteLadder:
    """Solve the backward recursion; gamma must be strictly decreasing, > 1."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size < 1:
        raise ConfigError("ladder needs at least one gamma level")
    if not np.all(np.isfinite(gamma)):
        raise ConfigError("gamma levels must be finite")
    if gamma[-1] <= 1.0:
        raise ConfigError(f"terminal gamma must exceed 1, got {gamma[-1]}")
    if not np.all(np.diff(gamma) < 0.0):
        raise ConfigError("gamma levels must be strictly decreasing")

    k, r = params.k, params.r
    N = gamma.size - 1
    c = k * gamma / (gamma + k - 1.0)
    b = np.empty_like(gamma)
    A = np.empty_like(gamma)
    b[N] = c[N]
    A[N] = (b[N] - k) / float(_G(gamma[N], b[N]))

    for n in range(N - 1, -1, -1):
        tail = DiscreteLadder(gamma=gamma, k=k, r=r, b=b, A=A, c=c)

        def f(x: float, n=n, tail=tail) -> float:
            return boundary_equation(tail, n, x)

        b[n] = _bisect(f, 1e-12, c[n] - 1e-12)
        vnext = float(tail.value(n + 1, b[n]))
        A[n] = (b[n] - k + vnext) / float(_G(gamma[n], b[n]))
        if not A[n] > 0.0:
            raise ArithmeticError(f"nonpositive ladder coefficient A_{n} = {A[n]}")

    return DiscreteLadder(gamma=gamma, k=k, r=r, b=b, A=A, c=c)


def ladder_from_spec(spec: RateSpec, params: ModelParams, n_levels: int) -> DiscreteLadder:
    """Sample gamma at the ladder levels u_n = n/N of a continuous rate spec.

    n_levels = 0 degenerates to a single level sampled at u = 0, which is a
    plain stopping problem (no expansion steps remain to be priced).
    """
    if n_levels < 0:
        raise ConfigError("ladder needs a nonnegative number of expansion steps")
    if n_levels == 0:
        u = np.array([0.0])
    else:
        u = np.arange(n_levels + 1) / n_levels
    return solve_ladder(np.asarray(gamma_of(spec, params, u), dtype=float), params)


def _bisect(f: Callable[[float], float], lo: float, hi: float) -> float:
    flo, fhi = f(lo), f(hi)
    if not (flo < 0.0 < fhi):
        raise ArithmeticError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= BISECT_F_TOL:
            return mid
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    raise ArithmeticError(f"bisection stalled: |f({mid})| = {abs(f(mid))} > {BISECT_F_TOL}")


# ---------------------------------------------------------------------------
# monotonicity condition (discrete analogue of the continuous cond1)
# ---------------------------------------------------------------------------


def discrete_sign_H(ladder: DiscreteLadder, n: int, b) -> np.ndarray:
    """H_n(b): sign determines whether b_n <= b_{n+1} locally.

    H_n(b) = 2 (b-k) (g_n - g_{n+1})
             + (g_{n+1} k - (g_{n+1} + k - 1) b) (g_n - 2 g_{n+1} + g_{n+2}) / (g_{n+1} - g_{n+2})
    """
    g = ladder.gamma
    k = ladder.k
    if not 0 <= n <= ladder.n_levels - 2:
        raise IndexError("H_n needs three consecutive levels")
    b = np.asarray(b, dtype=float)
    d2 = g[n] - 2.0 * g[n + 1] + g[n + 2]
    return 2.0 * (b - k) * (g[n] - g[n + 1]) + (g[n + 1] * k - (g[n + 1] + k - 1.0) * b) * d2 / (
        g[n + 1] - g[n + 2]
    )


@dataclass(frozen=True)
class DiscreteMonotoneReport:
    condition_values: List[float]  # 2 D1_n D1_{n+1} - D2_n gamma_{n+1}, per level
    condition_holds: List[bool]
    all_hold: bool
    b_nondecreasing: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_discrete_monotone(ladder: DiscreteLadder) -> DiscreteMonotoneReport:
    """Per-level condition 2 D1_n D1_{n+1} <= D2_n gamma_{n+1} (D = differences).

    Holds with equality when gamma_n is a sampled hyperbola.  Implies the
    thresholds come out ordered, which the report also records as observed.
    """
    g = ladder.gamma
    vals = []
    holds = []
    for n in range(ladder.n_levels - 1):
        d1a = g[n] - g[n + 1]
        d1b = g[n + 1] - g[n + 2]
        d2 = g[n] - 2.0 * g[n + 1] + g[n + 2]
        q = 2.0 * d1a * d1b - d2 * g[n + 1]
        vals.append(float(q))
        holds.append(bool(q <= SIGN_TOL))
    return DiscreteMonotoneReport(
        condition_values=vals,
        condition_holds=holds,
        all_hold=bool(all(holds)) if holds else True,
        b_nondecreasing=bool(np.all(np.diff(ladder.b) >= 0.0)),
    )


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteCheckReport:
    n_pi: int
    bellman_max_violation: float
    generator_max_residual: float
    smooth_fit_max_gap: float
    monotone: DiscreteMonotoneReport

    @property
    def passed(self) -> bool:
        return (
            self.bellman_max_violation <= TOL_BELLMAN
            and self.generator_max_residual <= TOL_GENERATOR
            and self.smooth_fit_max_gap <= TOL_SMOOTH_FIT
        )

    def to_dict(self) -> dict:
        return {
            "n_pi": self.n_pi,
            "bellman_max_violation": self.bellman_max_violation,
            "generator_max_residual": self.generator_max_residual,
            "smooth_fit_max_gap": self.smooth_fit_max_gap,
            "monotone": self.monotone.to_dict(),
            "tolerances": {
                "bellman": TOL_BELLMAN,
                "generator": TOL_GENERATOR,
                "smooth_fit": TOL_SMOOTH_FIT,
            },
            "passed": self.passed,
        }


def discrete_verification_suite(ladder: DiscreteLadder, n_pi: int = 999) -> DiscreteCheckReport:
    """Re-check the solved ladder against its own Bellman characterization.

    (i)  stepping up one level never beats the value: V_n >= pi - k + V_{n+1};
    (ii) generator inequality (rho_n^2/2) pi^2 (1-pi)^2 V_n'' - r V_n <= 0 by
         five-point central differences away from the value kinks at b_m;
    (iii) one-sided first derivatives of V_n agree at b_n (smooth fit).
    """
    pis = np.linspace(0.001, 0.999, n_pi)
    N = ladder.n_levels

    bellman = -np.inf
    gen = -np.inf
    for n in range(N + 1):
        vn = ladder.value(n, pis)
        vnext = ladder.value(n + 1, pis) if n < N else 0.0
        bellman = max(bellman, float(np.max(vnext + pis - ladder.k - vn)))

        away = np.ones(pis.shape, dtype=bool)
        for m in range(n, N + 1):
            away &= np.abs(pis - ladder.b[m]) > GEN_KINK_BAND
        away &= (pis > GEN_FD_STEP * 2.5) & (pis < 1.0 - GEN_FD_STEP * 2.5)
        pa = pis[away]
        h = GEN_FD_STEP
        v2 = (
            -ladder.value(n, pa + 2.0 * h)
            + 16.0 * ladder.value(n, pa + h)
            - 30.0 * ladder.value(n, pa)
            + 16.0 * ladder.value(n, pa - h)
            - ladder.value(n, pa - 2.0 * h)
        ) / (12.0 * h * h)
        resid = 0.5 * ladder.rho2(n) * pa**2 * (1.0 - pa) ** 2 * v2 - ladder.r * ladder.value(n, pa)
        gen = max(gen, float(np.max(resid)))

    # value(n, b_n) lands on the stopped branch, which equals the held branch
    # there to roundoff (A_n is defined from that equality), so both one-sided
    # stencils may share the anchor point.
    fit = -np.inf
    hp = 1e-5
    for n in range(N + 1):
        bn = ladder.b[n]
        f0 = ladder.value(n, bn)
        left = (
            3.0 * f0 - 4.0 * ladder.value(n, bn - hp) + ladder.value(n, bn - 2.0 * hp)
        ) / (2.0 * hp)
        right = (
            -3.0 * f0 + 4.0 * ladder.value(n, bn + hp) - ladder.value(n, bn + 2.0 * hp)
        ) / (2.0 * hp)
        fit = max(fit, abs(float(left) - float(right)))

    return DiscreteCheckReport(
        n_pi=n_pi,
        bellman_max_violation=bellman,
        generator_max_residual=gen,
        smooth_fit_max_gap=fit,
        monotone=check_discrete_monotone(ladder),
    )


# ---------------------------------------------------------------------------
# independent oracle: trinomial value iteration in log-odds space
# ---------------------------------------------------------------------------


def value_iteration_oracle(
    ladder: DiscreteLadder,
    n_space: int = 2000,
    dt: float = 1e-3,
    sup_tol: float = 1e-10,
    max_sweeps: int = 400000,
) -> Callable[[np.ndarray], np.ndarray]:
    """Brute-force V_0 on a trinomial log-odds grid; returns an interpolator.

    Each level solves sup_tau E[e^{-r tau} g_n(Pi_tau)] by successive
    approximation: the belief's log-odds diffuse with drift
    rho_n^2 (pi - 1/2) and variance rho_n^2 per unit time, matched by a
    one-node trinomial with spacing sqrt(2 rho_n^2 dt).  Obstacles chain the
    levels together exactly as in the closed-form recursion.
    """
    N = ladder.n_levels
    prev_phi: Optional[np.ndarray] = None
    prev_v: Optional[np.ndarray] = None
    disc = math.exp(-ladder.r * dt)

    for n in range(N, -1, -1):
        rho2 = ladder.rho2(n)
        step = math.sqrt(2.0 * rho2 * dt)
        phi = (np.arange(n_space) - n_space // 2) * step
        pi = 1.0 / (1.0 + np.exp(-phi))
        if n == N:
            vnext = np.zeros_like(pi)
        else:
            vnext = np.interp(phi, prev_phi, prev_v)
        g = pi - ladder.k + vnext

        m = rho2 * (pi - 0.5) * dt
        var = rho2 * dt
        pu = (var + m * m) / (2.0 * step * step) + m / (2.0 * step)
        pd = (var + m * m) / (2.0 * step * step) - m / (2.0 * step)
        pm = 1.0 - pu - pd
        if np.any(pu < 0) or np.any(pd < 0) or np.any(pm < 0):
            raise ArithmeticError("trinomial probabilities left [0,1]; reduce dt")

        v = np.maximum(g, 0.0)
        lo_edge = v[0]
        hi_edge = v[-1]
        for _ in range(max_sweeps):
            cont = disc * (pu[1:-1] * v[2:] + pm[1:-1] * v[1:-1] + pd[1:-1] * v[:-2])
            vn = np.empty_like(v)
            vn[0] = lo_edge
            vn[-1] = hi_edge
            vn[1:-1] = np.maximum(g[1:-1], cont)
            delta = float(np.max(np.abs(vn - v)))
            v = vn
            if delta < sup_tol:
                break
        else:
            raise ArithmeticError("value iteration did not reach the sup-norm tolerance")

        prev_phi, prev_v = phi, v

    phi0, v0 = prev_phi, prev_v

    def evaluate(pi_query: np.ndarray) -> np.ndarray:
        pi_query = np.asarray(pi_query, dtype=float)
        phi_q = np.log(pi_query) - np.log1p(-pi_query)
        return np.interp(phi_q, phi0, v0)

    return evaluate


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_ladder(ladder: DiscreteLadder, csv_path: Union[str, Path]) -> None:
    """CSV with one row per level: n, u_n, gamma_n, c_n, b_n, A_n."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "u_n", "gamma_n", "c_n", "b_n", "A_n"])
        for n in range(ladder.n_levels + 1):
            w.writerow(
                [
                    n,
                    repr(float(ladder.u_levels[n])),
                    repr(float(ladder.gamma[n])),
                    repr(float(ladder.c[n])),
                    repr(float(ladder.b[n])),
                    repr(float(ladder.A[n])),
                ]
            )
