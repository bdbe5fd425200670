"""
Scalar Riccati recursions

Controller (LQR) recursion, classical Kalman filter, the filter seen through an
AWGN link, and the computed optimal per-stage cost built from them.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from model import DEFAULT_DIVERGENCE_THRESHOLD, NetLQGError, SystemParams

logger = logging.getLogger(__name__)

TOLERANCE = 1e-12
MAX_ITERATIONS = 1_000_000


class NotConverged(NetLQGError):
    pass


class Diverged(NetLQGError):
    """Error variance grew without bound; solution holds the last iterate"""

    def __init__(self, message: str, solution: Optional["FilterSolution"] = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class ControlSolution:
    S: float
    L: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class FilterSolution:
    """P is the prior (predicted) variance, Sigma the posterior"""
    P: float
    Sigma: float
    converged: bool
    iterations: int


def _iterate(step: Callable[[float], float], x0: float, tol: float, max_iter: int,
             threshold: Optional[float] = None) -> Tuple[float, bool, int, bool]:
    """Fixed-point iteration; returns (value, converged, iterations, exceeded_threshold)"""
    x = x0
    for k in range(1, max_iter + 1):
        nxt = step(x)
        if threshold is not None and not abs(nxt) <= threshold:
            return nxt, False, k, True
        if abs(nxt - x) < tol * max(1.0, abs(nxt)):
            return nxt, True, k, False
        x = nxt
    return x, False, max_iter, False


# Controller

def _control_step(params: SystemParams) -> Callable[[float], float]:
    a2, b2, q, r = params.A ** 2, params.B ** 2, params.Q, params.R

    def step(s: float) -> float:
        return q + a2 * r * s / (r + b2 * s)
    return step


def _control_gain(params: SystemParams, s: float) -> float:
    return params.A * params.B * s / (params.R + params.B ** 2 * s)


def control_steady_state(params: SystemParams, tol: float = TOLERANCE,
                         max_iter: int = MAX_ITERATIONS) -> ControlSolution:
    """Iterate S from S0 = Q until the relative change drops below tol"""
    s, converged, iterations, _ = _iterate(_control_step(params), params.Q, tol, max_iter)
    if not converged:
        logger.warning(f"Controller Riccati did not converge in {max_iter} iterations (S={s})")
    return ControlSolution(S=s, L=_control_gain(params, s), converged=converged, iterations=iterations)


def control_steady_state_or_raise(params: SystemParams, tol: float = TOLERANCE,
                                  max_iter: int = MAX_ITERATIONS) -> ControlSolution:
    solution = control_steady_state(params, tol, max_iter)
    if not solution.converged:
        raise NotConverged(f"Controller Riccati did not converge in {max_iter} iterations")
    return solution


def control_finite_horizon(params: SystemParams, horizon: int) -> Tuple[List[float], List[float]]:
    """Backward recursion from S(T) = Q; returns S(0..T) and L(0..T-1)"""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1 (got {horizon})")
    step = _control_step(params)
    s_values = [0.0] * (horizon + 1)
    gains = [0.0] * horizon
    s_values[horizon] = params.Q
    for t in range(horizon - 1, -1, -1):
        s_values[t] = step(s_values[t + 1])
        gains[t] = _control_gain(params, s_values[t + 1])
    return s_values, gains


def closed_loop_pole(params: SystemParams) -> float:
    return params.A - params.B * control_steady_state(params).L


# Filters

def _posterior(p: float, c2: float, noise: float, gain_scale: float = 1.0) -> float:
    """Posterior variance after one measurement with noise variance `noise`"""
    denom = c2 * p + noise
    if denom <= 0.0:
        return p
    return p - gain_scale * c2 * p * p / denom


def classical_filter_steady_state(params: SystemParams, tol: float = TOLERANCE,
                                  max_iter: int = MAX_ITERATIONS,
                                  divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> FilterSolution:
    """Kalman filter over a perfect link"""
    if params.fully_observed:
        return FilterSolution(P=params.W, Sigma=0.0, converged=True, iterations=0)

    a2, c2, w, v = params.A ** 2, params.C ** 2, params.W, params.V

    def step(p: float) -> float:
        return a2 * _posterior(p, c2, v) + w

    p, converged, iterations, exceeded = _iterate(step, w, tol, max_iter, divergence_threshold)
    solution = FilterSolution(P=p, Sigma=_posterior(p, c2, v), converged=converged, iterations=iterations)
    if exceeded:
        raise Diverged(f"Filter variance exceeded {divergence_threshold} after {iterations} iterations", solution)
    if not converged:
        logger.warning(f"Filter Riccati did not converge in {max_iter} iterations (P={p})")
    return solution


def awgn_measurement_noise(params: SystemParams) -> float:
    """Measurement noise seen by the AWGN filter recursion: 1 if partially, 0 if fully observed"""
    if params.fully_observed:
        return 0.0
    if params.V != 1.0:
        logger.warning(f"AWGN filter recursion uses unit measurement noise; ignoring V={params.V}")
    return 1.0


def stabilizing_snr(params: SystemParams) -> float:
    """A^2 - 1; an AWGN link stabilizes the plant iff snr exceeds it (negative when |A| < 1)"""
    return params.A ** 2 - 1.0


def awgn_diverges(params: SystemParams, snr: float) -> bool:
    """True if P grows without bound over an AWGN(snr) link (with W > 0)"""
    if params.W <= 0.0:
        return False
    if params.C == 0.0:
        return params.A ** 2 >= 1.0
    return not snr > stabilizing_snr(params)


def awgn_filter_steady_state(params: SystemParams, snr: float,
                             measurement_noise: Optional[float] = None,
                             tol: float = TOLERANCE, max_iter: int = MAX_ITERATIONS,
                             divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> FilterSolution:
    """
    Filter for a measurement sent through an AWGN(snr) link with power-matched gain.
    P' = A^2 P (1 - k C^2 P / (C^2 P + V)) + W, k = snr / (snr + 1)
    """
    if not snr > 0:
        raise ValueError(f"snr must be > 0 (got {snr})")
    v = awgn_measurement_noise(params) if measurement_noise is None else measurement_noise
    a2, c2, w = params.A ** 2, params.C ** 2, params.W
    k = snr / (snr + 1.0)

    if awgn_diverges(params, snr):
        raise Diverged(
            f"snr={snr} is at or below the stabilization threshold A^2 - 1 = {stabilizing_snr(params)}",
            FilterSolution(P=math.inf, Sigma=math.inf, converged=False, iterations=0),
        )

    def step(p: float) -> float:
        return a2 * _posterior(p, c2, v, k) + w

    p, converged, iterations, exceeded = _iterate(step, w, tol, max_iter, divergence_threshold)
    solution = FilterSolution(P=p, Sigma=_posterior(p, c2, v, k), converged=converged, iterations=iterations)
    if exceeded:
        raise Diverged(f"Filter variance exceeded {divergence_threshold} after {iterations} iterations", solution)
    if not converged:
        logger.warning(f"AWGN filter Riccati did not converge in {max_iter} iterations (P={p})")
    return solution


def awgn_filter_trajectory(params: SystemParams, snr: float, horizon: int,
                           measurement_noise: Optional[float] = None,
                           divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> List[FilterSolution]:
    """P(t), Sigma(t) for t = 0..horizon starting from P(0) = W"""
    if not snr > 0:
        raise ValueError(f"snr must be > 0 (got {snr})")
    v = awgn_measurement_noise(params) if measurement_noise is None else measurement_noise
    a2, c2, w = params.A ** 2, params.C ** 2, params.W
    k = snr / (snr + 1.0)
    p = w
    trajectory = []
    for t in range(horizon + 1):
        sigma = _posterior(p, c2, v, k)
        trajectory.append(FilterSolution(P=p, Sigma=sigma, converged=False, iterations=t))
        p = a2 * sigma + w
        if not abs(p) <= divergence_threshold:
            raise Diverged(f"Filter variance exceeded {divergence_threshold} at t={t + 1}", trajectory[-1])
    return trajectory


# Costs

def stage_cost(params: SystemParams, s: float, sigma: float) -> float:
    """Q Sigma + S (A^2 Sigma + W - Sigma)"""
    return params.Q * sigma + s * (params.A ** 2 * sigma + params.W - sigma)


def computed_cost_per_stage(params: SystemParams, snr: float,
                            measurement_noise: Optional[float] = None,
                            divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD) -> float:
    """Optimal average cost over an AWGN(snr) link; raises Diverged below the threshold"""
    control = control_steady_state(params)
    filt = awgn_filter_steady_state(params, snr, measurement_noise=measurement_noise,
                                    divergence_threshold=divergence_threshold)
    return stage_cost(params, control.S, filt.Sigma)


def computed_cost_finite_horizon(params: SystemParams, snr: float, horizon: int,
                                 measurement_noise: Optional[float] = None) -> float:
    """Average of the exact per-stage terms over t = 0..horizon"""
    s_values, _ = control_finite_horizon(params, horizon)
    trajectory = awgn_filter_trajectory(params, snr, horizon, measurement_noise)
    a2, q, w = params.A ** 2, params.Q, params.W
    total = 0.0
    prev_sigma = 0.0
    for s, filt in zip(s_values, trajectory):
        total += q * filt.Sigma + s * (a2 * prev_sigma + w - filt.Sigma)
        prev_sigma = filt.Sigma
    return total / (horizon + 1)


def b_min(params: SystemParams) -> float:
    """Optimal cost with a perfect link: S W if fully observed, classical filter otherwise"""
    control = control_steady_state(params)
    sigma = 0.0 if params.fully_observed else classical_filter_steady_state(params).Sigma
    return stage_cost(params, control.S, sigma)
