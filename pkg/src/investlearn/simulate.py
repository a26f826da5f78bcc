"""Monte Carlo validation of the reflecting expansion strategy.

The candidate value function is checked against a direct simulation of the
strategy it claims to price: hold capacity U at the running maximum of
h(sup Pi), where h is the inverse of the exercise boundary, and collect
(Pi_t - k) dU_t discounted at r.

The belief is simulated through its log odds Phi = log(Pi / (1 - Pi)).  Over
a step where the signal quality rho is held at its start-of-step value the
transition is exact, not an Euler approximation:

    Phi' = Phi + (theta - 1/2) rho^2 dt + rho sqrt(dt) Z,   Z ~ N(0, 1),

with theta the path's true state, drawn Bernoulli(pi_0) up front.  The only
discretization effects are that U (hence rho) updates at step ends and that
the boundary crossing is monitored at step ends.

Each path owns a counter-based substream keyed (seed, path index), so results
are reproducible bit for bit, independent of chunking, and paths are common
random numbers across strategies with the same seed.  Draw 0 of each stream
is the uniform that decides theta; normals follow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .boundary import BoundaryCurve
from .model import ModelParams, RateSpec, rho, stopping_threshold_c, stopping_value_v

CHUNK_STEPS = 512


def _expit(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.  Defaults favor accuracy over speed."""

    start_u: float = 0.0
    start_pi: float = 0.5
    dt: float = 0.005
    horizon: float = 150.0
    n_paths: int = 20000
    seed: int = 1

    def __post_init__(self):
        if not 0.0 <= self.start_u < 1.0:
            raise ValueError(f"start_u must lie in [0, 1), got {self.start_u}")
        if not 0.0 < self.start_pi < 1.0:
            raise ValueError(f"start_pi must lie in (0, 1), got {self.start_pi}")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.horizon < 0.0:
            raise ValueError("horizon must be nonnegative")
        if self.n_paths < 1:
            raise ValueError("need at least one path")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class SimResult:
    estimate: float
    std_error: float
    initial_jump: float
    truncation_bound: float
    frac_alive_at_horizon: float
    config: SimConfig
    payoffs: np.ndarray
    theta: np.ndarray
    terminal_u: np.ndarray
    terminal_pi: np.ndarray

    def summary(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "initial_jump": self.initial_jump,
            "truncation_bound": self.truncation_bound,
            "frac_alive_at_horizon": self.frac_alive_at_horizon,
            "n_paths": self.config.n_paths,
            "dt": self.config.dt,
            "horizon": self.config.horizon,
            "seed": self.config.seed,
            "start_u": self.config.start_u,
            "start_pi": self.config.start_pi,
        }


def _substreams(seed: int, n_paths: int) -> List[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(key=[seed, i])) for i in range(n_paths)]


def _draw_theta(gens: List[np.random.Generator], start_pi: float) -> np.ndarray:
    unif = np.array([g.random() for g in gens])
    return (unif < start_pi).astype(float)


def _finish(cfg: SimConfig, params: ModelParams, jump: float, payoffs, theta,
            terminal_u, terminal_pi, frac_alive: float) -> SimResult:
    est = float(np.sum(payoffs) / cfg.n_paths)
    # a single path carries no spread information; report zero, not NaN
    se = float(np.std(payoffs, ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
    bound = math.exp(-params.r * cfg.horizon) * (1.0 - params.k)
    return SimResult(
        estimate=est,
        std_error=se,
        initial_jump=jump,
        truncation_bound=bound,
        frac_alive_at_horizon=frac_alive,
        config=cfg,
        payoffs=payoffs,
        theta=theta,
        terminal_u=terminal_u,
        terminal_pi=terminal_pi,
    )


def simulate_reflecting(curve: BoundaryCurve, cfg: SimConfig) -> SimResult:
    """Run the reflecting strategy for the boundary in `curve`.

    The payoff of a path is (pi0 - k)(h(pi0) - u0)^+ collected at time zero if
    the start lies above the boundary, plus the discounted stream of
    (Pi - k) dU increments while U climbs toward 1.  A path ends when U
    reaches 1 or the horizon runs out; the reported truncation bound caps
    what the horizon cut can have discarded per path.
    """
    if not curve.monotone:
        raise ValueError("reflecting strategy needs a strictly increasing boundary")
    spec, params = curve.spec, curve.params
    r, k = params.r, params.k
    dt, sqdt = cfg.dt, math.sqrt(cfg.dt)
    n_steps = cfg.n_steps

    gens = _substreams(cfg.seed, cfg.n_paths)
    theta = _draw_theta(gens, cfg.start_pi)

    u_start = max(cfg.start_u, float(curve.h_at(cfg.start_pi)))
    jump = (cfg.start_pi - k) * (u_start - cfg.start_u) if u_start > cfg.start_u else 0.0
    payoffs = np.full(cfg.n_paths, jump)
    terminal_u = np.full(cfg.n_paths, u_start)
    terminal_pi = np.full(cfg.n_paths, cfg.start_pi)

    if u_start >= 1.0:
        return _finish(cfg, params, jump, payoffs, theta, terminal_u, terminal_pi, 0.0)

    idx = np.arange(cfg.n_paths)
    phi = np.full(cfg.n_paths, _logit(cfg.start_pi))
    phimax = phi.copy()
    u = np.full(cfg.n_paths, u_start)
    th = theta.copy()

    steps_done = 0
    while steps_done < n_steps and idx.size:
        span = min(CHUNK_STEPS, n_steps - steps_done)
        z = np.empty((idx.size, span))
        for row, i in enumerate(idx):
            z[row] = gens[i].standard_normal(span)
        alive = np.ones(idx.size, dtype=bool)

        for step in range(span):
            t_next = (steps_done + step + 1) * dt
            rv = rho(spec, params, u)
            phi = np.where(alive, phi + (th - 0.5) * rv * rv * dt + rv * sqdt * z[:, step], phi)

            exceed = alive & (phi > phimax)
            if np.any(exceed):
                pi_e = _expit(phi[exceed])
                u_cand = curve.h_at(pi_e)
                du = np.maximum(u_cand, u[exceed]) - u[exceed]
                grow = du > 0.0
                if np.any(grow):
                    rows = np.flatnonzero(exceed)[grow]
                    payoffs[idx[rows]] += math.exp(-r * t_next) * (pi_e[grow] - k) * du[grow]
                    u[rows] += du[grow]
                phimax[exceed] = phi[exceed]

                died = exceed & (u >= 1.0)
                if np.any(died):
                    terminal_u[idx[died]] = 1.0
                    terminal_pi[idx[died]] = _expit(phi[died])
                    alive &= ~died
                    if not np.any(alive):
                        break

        steps_done += span
        if not np.all(alive):
            idx, phi, phimax, u, th = idx[alive], phi[alive], phimax[alive], u[alive], th[alive]

    if idx.size:
        terminal_u[idx] = u
        terminal_pi[idx] = _expit(phi)
    frac_alive = idx.size / cfg.n_paths
    return _finish(cfg, params, jump, payoffs, theta, terminal_u, terminal_pi, frac_alive)


def simulate_baseline(curve: BoundaryCurve, cfg: SimConfig, kind: str) -> SimResult:
    """Reference strategies sharing the reflecting run's random numbers.

    "full_now":  invest to capacity 1 immediately; deterministic payoff
                 (pi0 - k)(1 - u0).
    "frozen":    never invest; payoff zero.
    "stop_at_c": keep rho frozen at the start capacity and invest everything
                 the first time Pi reaches the one-shot threshold c(u0);
                 its value is (1 - u0) v(pi0; u0), which the estimate should
                 reproduce up to step-end monitoring bias.
    """
    spec, params = curve.spec, curve.params
    r, k = params.r, params.k

    if kind == "full_now":
        gens = _substreams(cfg.seed, cfg.n_paths)
        theta = _draw_theta(gens, cfg.start_pi)
        pay = (cfg.start_pi - k) * (1.0 - cfg.start_u)
        payoffs = np.full(cfg.n_paths, pay)
        return _finish(cfg, params, pay, payoffs, theta,
                       np.ones(cfg.n_paths), np.full(cfg.n_paths, cfg.start_pi), 0.0)

    if kind == "frozen":
        gens = _substreams(cfg.seed, cfg.n_paths)
        theta = _draw_theta(gens, cfg.start_pi)
        return _finish(cfg, params, 0.0, np.zeros(cfg.n_paths), theta,
                       np.full(cfg.n_paths, cfg.start_u),
                       np.full(cfg.n_paths, cfg.start_pi), 1.0)

    if kind != "stop_at_c":
        raise ValueError(f"unknown baseline {kind!r}")

    dt, sqdt = cfg.dt, math.sqrt(cfg.dt)
    n_steps = cfg.n_steps
    rv = float(rho(spec, params, cfg.start_u))
    cbar = float(stopping_threshold_c(spec, params, cfg.start_u))
    scale = 1.0 - cfg.start_u

    gens = _substreams(cfg.seed, cfg.n_paths)
    theta = _draw_theta(gens, cfg.start_pi)
    payoffs = np.zeros(cfg.n_paths)
    terminal_u = np.full(cfg.n_paths, cfg.start_u)
    terminal_pi = np.full(cfg.n_paths, cfg.start_pi)

    if cfg.start_pi >= cbar:
        payoffs[:] = (cfg.start_pi - k) * scale
        terminal_u[:] = 1.0
        return _finish(cfg, params, float(payoffs[0]), payoffs, theta,
                       terminal_u, terminal_pi, 0.0)

    idx = np.arange(cfg.n_paths)
    phi = np.full(cfg.n_paths, _logit(cfg.start_pi))
    th = theta.copy()
    phi_c = _logit(cbar)
    drift = (th - 0.5) * rv * rv * dt

    steps_done = 0
    while steps_done < n_steps and idx.size:
        span = min(CHUNK_STEPS, n_steps - steps_done)
        z = np.empty((idx.size, span))
        for row, i in enumerate(idx):
            z[row] = gens[i].standard_normal(span)
        alive = np.ones(idx.size, dtype=bool)

        for step in range(span):
            t_next = (steps_done + step + 1) * dt
            phi = np.where(alive, phi + drift + rv * sqdt * z[:, step], phi)
            hit = alive & (phi >= phi_c)
            if np.any(hit):
                pi_hit = _expit(phi[hit])
                payoffs[idx[hit]] = math.exp(-r * t_next) * (pi_hit - k) * scale
                terminal_u[idx[hit]] = 1.0
                terminal_pi[idx[hit]] = pi_hit
                alive &= ~hit
                if not np.any(alive):
                    break

        steps_done += span
        if not np.all(alive):
            idx, phi, th = idx[alive], phi[alive], th[alive]
            drift = (th - 0.5) * rv * rv * dt

    if idx.size:
        terminal_pi[idx] = _expit(phi)
    frac_alive = idx.size / cfg.n_paths
    return _finish(cfg, params, 0.0, payoffs, theta, terminal_u, terminal_pi, frac_alive)


def stop_at_c_reference(curve: BoundaryCurve, cfg: SimConfig) -> float:
    """Closed-form value the stop_at_c baseline estimates."""
    spec, params = curve.spec, curve.params
    return float(
        (1.0 - cfg.start_u)
        * stopping_value_v(spec, params, cfg.start_u, cfg.start_pi)
    )


# ---------------------------------------------------------------------------
# filter diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationReport:
    """Frozen-capacity filter checks: martingale property and calibration."""

    start_pi: float
    horizon: float
    n_paths: int
    mean_pi: float
    se_pi: float
    martingale_ok: bool
    decile_mean_pi: List[float]
    decile_mean_theta: List[float]
    decile_se: List[float]
    calibration_ok: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def filter_calibration(
    spec: RateSpec,
    params: ModelParams,
    cfg: SimConfig,
    n_bins: int = 10,
) -> CalibrationReport:
    """Simulate the belief with capacity frozen at start_u and test it.

    Two checks at the horizon: E[Pi_T] = pi_0 (the belief is a martingale
    under the unconditional law), and within terminal-belief bins the
    fraction of paths with theta = 1 matches the mean belief (the filter is
    calibrated).  Both at three standard errors.
    """
    dt, sqdt = cfg.dt, math.sqrt(cfg.dt)
    n_steps = cfg.n_steps
    rv = float(rho(spec, params, cfg.start_u))

    gens = _substreams(cfg.seed, cfg.n_paths)
    theta = _draw_theta(gens, cfg.start_pi)
    phi = np.full(cfg.n_paths, _logit(cfg.start_pi))
    drift = (theta - 0.5) * rv * rv * dt

    steps_done = 0
    while steps_done < n_steps:
        span = min(CHUNK_STEPS, n_steps - steps_done)
        z = np.empty((cfg.n_paths, span))
        for i, g in enumerate(gens):
            z[i] = g.standard_normal(span)
        phi = phi + drift * span + rv * sqdt * np.sum(z, axis=1)
        steps_done += span

    pi_end = _expit(phi)
    mean_pi = float(np.mean(pi_end))
    se_pi = float(np.std(pi_end, ddof=1) / math.sqrt(cfg.n_paths))
    martingale_ok = abs(mean_pi - cfg.start_pi) <= 3.0 * se_pi

    order = np.argsort(pi_end)
    bins = np.array_split(order, n_bins)
    d_pi, d_th, d_se = [], [], []
    ok = True
    for members in bins:
        p = pi_end[members]
        t = theta[members]
        mp = float(np.mean(p))
        mt = float(np.mean(t))
        # binomial spread of the theta average plus the belief spread
        se = float(
            math.sqrt(np.var(t, ddof=1) / members.size + np.var(p, ddof=1) / members.size)
        )
        se = max(se, 1e-12)
        d_pi.append(mp)
        d_th.append(mt)
        d_se.append(se)
        if abs(mp - mt) > 3.0 * se:
            ok = False

    return CalibrationReport(
        start_pi=cfg.start_pi,
        horizon=cfg.horizon,
        n_paths=cfg.n_paths,
        mean_pi=mean_pi,
        se_pi=se_pi,
        martingale_ok=martingale_ok,
        decile_mean_pi=d_pi,
        decile_mean_theta=d_th,
        decile_se=d_se,
        calibration_ok=ok,
    )


# ---------------------------------------------------------------------------
# trajectories and per-path output
# ---------------------------------------------------------------------------


def sample_trajectory(
    curve: BoundaryCurve, cfg: SimConfig, path_index: int = 0
) -> dict:
    """One path of (t, U, Pi) under the reflecting strategy, for inspection.

    Uses the same substream the batch run would give this path index, so a
    plotted trajectory is one of the paths behind the batch estimate.
    """
    if not curve.monotone:
        raise ValueError("reflecting strategy needs a strictly increasing boundary")
    spec, params = curve.spec, curve.params
    dt, sqdt = cfg.dt, math.sqrt(cfg.dt)
    gen = np.random.Generator(np.random.Philox(key=[cfg.seed, path_index]))
    theta = 1.0 if gen.random() < cfg.start_pi else 0.0

    u = max(cfg.start_u, float(curve.h_at(cfg.start_pi)))
    phi = _logit(cfg.start_pi)
    phimax = phi
    times = [0.0]
    us = [u]
    pis = [cfg.start_pi]

    for n in range(cfg.n_steps):
        if u >= 1.0:
            break
        rv = float(rho(spec, params, u))
        phi += (theta - 0.5) * rv * rv * dt + rv * sqdt * gen.standard_normal()
        if phi > phimax:
            phimax = phi
            pi = float(_expit(np.array(phi)))
            u = max(u, float(curve.h_at(pi)))
        times.append((n + 1) * dt)
        us.append(u)
        pis.append(float(_expit(np.array(phi))))

    return {
        "t": np.array(times),
        "u": np.array(us),
        "pi": np.array(pis),
        "theta": theta,
        "path_index": path_index,
    }


def save_trajectory(traj: dict, csv_path: Union[str, Path]) -> None:
    with open(Path(csv_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "U", "Pi"])
        for t, u, p in zip(traj["t"], traj["u"], traj["pi"]):
            w.writerow([repr(float(t)), repr(float(u)), repr(float(p))])


def save_paths(result: SimResult, csv_path: Union[str, Path]) -> None:
    with open(Path(csv_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "theta", "payoff", "initial_jump", "terminal_u", "terminal_pi"])
        for i in range(result.config.n_paths):
            w.writerow(
                [
                    i,
                    int(result.theta[i]),
                    repr(float(result.payoffs[i])),
                    repr(float(result.initial_jump)),
                    repr(float(result.terminal_u[i])),
                    repr(float(result.terminal_pi[i])),
                ]
            )
