"""
Information-theoretic limits on LQG cost over a rate-limited or AWGN link

Lower bound on the bits per sample needed for a target cost (and its inverse),
the AWGN capacity, and the cost bound as a function of SNR.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import riccati
from model import NetLQGError, NoiseSpec, SystemParams, differential_entropy

logger = logging.getLogger(__name__)


class CostNotAchievable(NetLQGError):
    """Target cost at or below b_min; no finite rate reaches it"""


class RateBelowStabilization(NetLQGError):
    """Rate at or below log2|A|; the plant cannot be stabilized"""


class InconsistentBound(NetLQGError):
    """Bound inputs fail the controller Riccati fixed point or N_w <= variance"""


@dataclass(frozen=True)
class BoundContext:
    params: SystemParams
    N_w: float
    S: float
    M: float
    b_min: float

    @property
    def log2_abs_a(self) -> float:
        return data_rate_threshold(self.params)


def entropy_power(spec: NoiseSpec) -> float:
    """exp(2 h) / (2 pi e); equals the variance for a Gaussian"""
    if spec.stddev == 0.0:
        return 0.0
    return math.exp(2.0 * differential_entropy(spec)) / (2.0 * math.pi * math.e)


def solve_mare(params: SystemParams) -> Tuple[float, float]:
    """(M, S) with M = S^2 B^2 / (R + B^2 S)"""
    control = riccati.control_steady_state_or_raise(params)
    s = control.S
    b2 = params.B ** 2
    return s * s * b2 / (params.R + b2 * s), s


FIXED_POINT_TOL = 1e-9


def _check_context(ctx: BoundContext, disturbance: NoiseSpec) -> None:
    """S and M must solve the controller Riccati pair and N_w cannot exceed the variance"""
    p = ctx.params
    problems = []
    s_residual = abs(ctx.S - (p.Q + p.A ** 2 * (ctx.S - ctx.M)))
    if not s_residual < FIXED_POINT_TOL * max(1.0, abs(ctx.S)):
        problems.append(f"S={ctx.S} is not a fixed point (residual {s_residual})")
    m_expected = ctx.S ** 2 * p.B ** 2 / (p.R + p.B ** 2 * ctx.S)
    m_residual = abs(ctx.M - m_expected)
    if not m_residual < FIXED_POINT_TOL * max(1.0, abs(ctx.M)):
        problems.append(f"M={ctx.M} does not match S^2 B^2 / (R + B^2 S) = {m_expected}")
    if not ctx.N_w <= disturbance.variance * (1.0 + 1e-12):
        problems.append(f"N_w={ctx.N_w} exceeds the disturbance variance {disturbance.variance}")
    if problems:
        raise InconsistentBound("; ".join(problems))


def bound_context(params: SystemParams, disturbance: NoiseSpec) -> BoundContext:
    m, s = solve_mare(params)
    ctx = BoundContext(params=params, N_w=entropy_power(disturbance), S=s, M=m,
                       b_min=riccati.b_min(params))
    _check_context(ctx, disturbance)
    return ctx


def data_rate_threshold(params: SystemParams) -> float:
    """log2|A|; rates above it stabilize the plant (-inf for A = 0)"""
    if params.A == 0:
        return -math.inf
    return math.log2(abs(params.A))


def rate_lower_bound(b: float, ctx: BoundContext) -> float:
    """Bits per sample needed for average cost b"""
    gap = b - ctx.b_min
    if not gap > 0:
        raise CostNotAchievable(f"cost {b} is not above b_min = {ctx.b_min}")
    if ctx.params.A == 0:
        return -math.inf
    a2 = ctx.params.A ** 2
    return 0.5 * math.log2(a2 + a2 * ctx.N_w * ctx.M / gap)


def cost_lower_bound_at_rate(r: float, ctx: BoundContext) -> float:
    """b_min + N_w M / (2^{2(r - log2|A|)} - 1)"""
    if math.isinf(r) and r > 0:
        return ctx.b_min
    if not r > ctx.log2_abs_a:
        raise RateBelowStabilization(f"rate {r} is not above log2|A| = {ctx.log2_abs_a}")
    if ctx.params.A == 0:
        return ctx.b_min
    excess = 2.0 * (r - ctx.log2_abs_a) * math.log(2.0)
    return ctx.b_min + ctx.N_w * ctx.M / math.expm1(excess)


def awgn_capacity(snr: float) -> float:
    """0.5 log2(1 + snr) bits per channel use"""
    if snr < 0:
        raise ValueError(f"snr must be >= 0 (got {snr})")
    return 0.5 * math.log1p(snr) / math.log(2.0)


def cost_lower_bound_vs_snr(snr: float, ctx: BoundContext) -> float:
    """Rate bound at r = capacity(snr), in the closed form b_min + N_w M A^2 / (1 + snr - A^2)"""
    if snr < 0:
        raise ValueError(f"snr must be >= 0 (got {snr})")
    threshold = riccati.stabilizing_snr(ctx.params)
    if not snr > threshold:
        raise RateBelowStabilization(f"snr {snr} is not above A^2 - 1 = {threshold}")
    if math.isinf(snr):
        return ctx.b_min
    a2 = ctx.params.A ** 2
    return ctx.b_min + ctx.N_w * ctx.M * a2 / (1.0 + snr - a2)


def bound_curve_vs_rate(rates: Sequence[float], ctx: BoundContext) -> List[Tuple[float, float, float]]:
    """(rate, rate, bound) rows; rates below the threshold give +inf"""
    rows = []
    for r in rates:
        try:
            rows.append((r, r, cost_lower_bound_at_rate(r, ctx)))
        except RateBelowStabilization:
            rows.append((r, r, math.inf))
    return rows


def bound_curve_vs_snr(snrs: Sequence[float], ctx: BoundContext) -> List[Tuple[float, float, float]]:
    """(snr, capacity, bound) rows"""
    rows = []
    for snr in snrs:
        try:
            rows.append((snr, awgn_capacity(snr), cost_lower_bound_vs_snr(snr, ctx)))
        except RateBelowStabilization:
            rows.append((snr, awgn_capacity(snr), math.inf))
    return rows
