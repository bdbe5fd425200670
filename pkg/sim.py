"""
Closed-loop Monte Carlo engine

Simulates x' = a_t x + B u + w with a certainty-equivalent controller behind
a perfect, AWGN or quantized link, and runs the SNR / step-size sweeps.

Trials are vectorized: a batch of trials advances one time step per numpy
operation, and every trial draws from its own (seed, trial, purpose) streams,
so a trial's numbers do not depend on batch size or worker count.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import bounds
import channel
import riccati
from model import (
    MAIN_STAGE,
    PILOT_STAGE,
    ChannelKind,
    ChannelSpec,
    ExperimentConfig,
    NetLQGError,
    QuantizerScheme,
    QuantizerSpec,
    StreamPurpose,
    UncertainFamily,
    random_stream,
    sample_noise_array,
    with_channel,
)
from validator import InvalidConfig, validate

logger = logging.getLogger(__name__)

# divergence is checked once per chunk of steps
CHUNK = 64
MAX_BATCH = 16


class AllTrialsDiverged(NetLQGError):
    def __init__(self, message: str, trials: int):
        super().__init__(message)
        self.trials = trials


@dataclass(frozen=True)
class EpisodeResult:
    avg_cost: float
    entropy_bits: Optional[float]
    diverged: bool
    final_state_mag: float


@dataclass(frozen=True)
class SweepRecord:
    """One point of a tradeoff curve; None marks a value that does not exist for the point"""
    control_var: float
    info_bits: Optional[float]
    sim_cost_mean: Optional[float]
    sim_cost_stderr: Optional[float]
    computed_cost: Optional[float]
    bound_cost: Optional[float]
    diverged_fraction: Optional[float]


class MonteCarloSummary(NamedTuple):
    mean: float
    stderr: float
    diverged_fraction: float
    entropy_bits: Optional[float]


@dataclass(frozen=True)
class LinkPlan:
    """What the controller knows about the link, fixed before any trial runs"""
    kind: ChannelKind
    control_gain: float
    kalman_gains: np.ndarray
    effective_noise: float
    signal_power: float = 0.0
    snr: Optional[float] = None
    step: Optional[float] = None
    codebook: Optional[channel.Codebook] = None
    training_mse: Optional[float] = None
    stabilizable: bool = True


class _TrialNoise(NamedTuple):
    x0: float
    w: np.ndarray
    v: Optional[np.ndarray]
    z: Optional[np.ndarray]
    a: Optional[np.ndarray]


def _kalman_gains(cfg: ExperimentConfig, effective_noise: float) -> np.ndarray:
    """Time-varying gains from P0 = W; constant once P settles"""
    a2 = cfg.controller_a ** 2
    c, w = cfg.params.C, cfg.params.W
    gains = np.zeros(cfg.horizon)
    p = w
    for t in range(cfg.horizon):
        denom = c * c * p + effective_noise
        k = p * c / denom if denom > 0 else 0.0
        gains[t] = k
        nxt = a2 * (p - k * c * p) + w
        if not math.isfinite(nxt):
            break
        if abs(nxt - p) <= 1e-15 * max(1.0, p):
            gains[t + 1:] = k
            break
        p = nxt
    return gains


def plan_link(cfg: ExperimentConfig, design: Optional[channel.LloydMaxDesign] = None) -> LinkPlan:
    """Receiver-side noise model and gains for cfg's channel"""
    params = cfg.params
    ctrl_params = params.model_copy(update={"A": cfg.controller_a})
    control_gain = riccati.control_steady_state(ctrl_params).L
    spec = cfg.channel
    extra = {}

    if spec.kind is ChannelKind.PERFECT:
        effective = params.V
    elif spec.kind is ChannelKind.AWGN:
        try:
            filt = riccati.awgn_filter_steady_state(ctrl_params, spec.snr, measurement_noise=params.V,
                                                    divergence_threshold=cfg.divergence_threshold)
        except riccati.Diverged as e:
            logger.info(f"AWGN snr={spec.snr}: {e}; trials are reported as diverged")
            return LinkPlan(kind=spec.kind, control_gain=control_gain, kalman_gains=np.zeros(0),
                            effective_noise=math.inf, snr=spec.snr, stabilizable=False)
        signal_power = params.C ** 2 * filt.P + params.V
        effective = params.V + signal_power / spec.snr
        extra = {"signal_power": signal_power, "snr": spec.snr}
    elif spec.scheme is QuantizerScheme.UNIFORM:
        step = spec.quantizer.step
        effective = params.V + step * step / 12.0
        extra = {"step": step}
    else:
        if design is None:
            design = design_codebook(cfg, spec.quantizer.levels)
        effective = params.V + design.mse
        extra = {"codebook": design.codebook, "training_mse": design.mse}

    return LinkPlan(kind=spec.kind, control_gain=control_gain, kalman_gains=_kalman_gains(cfg, effective),
                    effective_noise=effective, **extra)


def _draw_trial(cfg: ExperimentConfig, plan: LinkPlan, trial_index: int, stage: int) -> _TrialNoise:
    params, horizon = cfg.params, cfg.horizon

    def stream(purpose: StreamPurpose) -> np.random.Generator:
        return random_stream(cfg.master_seed, trial_index, purpose, stage)

    if params.W > 0:
        x0 = math.sqrt(params.W) * float(stream(StreamPurpose.INITIAL_STATE).standard_normal())
        w = sample_noise_array(cfg.disturbance, stream(StreamPurpose.DISTURBANCE), horizon)
    else:
        x0, w = 0.0, np.zeros(horizon)
    v = None
    if params.V > 0:
        v = math.sqrt(params.V) * stream(StreamPurpose.MEASUREMENT).standard_normal(horizon)
    z = None
    if plan.kind is ChannelKind.AWGN and plan.signal_power > 0:
        z = channel.awgn_transmit(np.zeros(horizon), plan.signal_power, plan.snr, stream(StreamPurpose.CHANNEL))
    a = None
    uncertain = cfg.uncertain_a
    if uncertain.enabled:
        rng = stream(StreamPurpose.PLANT_A)
        if uncertain.family is UncertainFamily.GAUSSIAN:
            a = uncertain.mean + uncertain.spread * rng.standard_normal(horizon)
        else:
            a = uncertain.mean + uncertain.spread * rng.uniform(-1.0, 1.0, horizon)
    return _TrialNoise(x0=x0, w=w, v=v, z=z, a=a)


def _stack(columns: List[Optional[np.ndarray]]) -> Optional[np.ndarray]:
    if columns[0] is None:
        return None
    return np.stack(columns, axis=1)


def _diverged(final_state_mag: float) -> EpisodeResult:
    return EpisodeResult(avg_cost=math.nan, entropy_bits=None, diverged=True, final_state_mag=final_state_mag)


def _simulate_batch(cfg: ExperimentConfig, plan: LinkPlan, trial_indices: Sequence[int],
                    stage: int = MAIN_STAGE,
                    keep_measurements: bool = False) -> Tuple[List[EpisodeResult], Optional[np.ndarray]]:
    """Run trials side by side; returns per-trial results and optionally the (T, n) measurements"""
    n = len(trial_indices)
    if not plan.stabilizable:
        return [_diverged(math.inf) for _ in trial_indices], None

    params = cfg.params
    horizon, burn_in, limit = cfg.horizon, cfg.burn_in, cfg.divergence_threshold
    draws = [_draw_trial(cfg, plan, i, stage) for i in trial_indices]
    x = np.array([d.x0 for d in draws])
    w = np.stack([d.w for d in draws], axis=1)
    v = _stack([d.v for d in draws])
    z = _stack([d.z for d in draws])
    a = _stack([d.a for d in draws])

    plant_a, ctrl_a = params.A, cfg.controller_a
    b, c = params.B, params.C
    gain, kalman = plan.control_gain, plan.kalman_gains
    quantized = plan.kind is ChannelKind.QUANTIZED
    step = plan.step
    if plan.codebook is not None:
        thresholds = np.asarray(plan.codebook.thresholds)
        levels = np.asarray(plan.codebook.levels)

    xs = np.empty((horizon, n))
    us = np.empty((horizon, n))
    bins = np.empty((horizon, n)) if quantized else None
    ys = np.empty((horizon, n)) if keep_measurements else None
    xhat_pred = np.zeros(n)
    diverged = np.zeros(n, dtype=bool)
    crossing = np.full(n, math.inf)

    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, horizon, CHUNK):
            stop = min(start + CHUNK, horizon)
            for t in range(start, stop):
                y = c * x if v is None else c * x + v[t]
                if ys is not None:
                    ys[t] = y
                if quantized:
                    if step is not None:
                        idx, r = channel.uniform_quantize_array(y, step)
                    else:
                        idx = np.searchsorted(thresholds, y)
                        r = levels[idx]
                    bins[t] = idx
                elif z is not None:
                    r = y + z[t]
                else:
                    r = y
                xhat = xhat_pred + kalman[t] * (r - c * xhat_pred)
                u = -gain * xhat
                xs[t] = x
                us[t] = u
                x = (plant_a if a is None else a[t]) * x + b * u + w[t]
                xhat_pred = ctrl_a * xhat + b * u

            # NaN counts as an infinite state
            block = np.nan_to_num(np.abs(xs[start:stop]), nan=math.inf)
            over = block >= limit
            hit = over.any(axis=0) & ~diverged
            if stop == horizon:
                final = np.nan_to_num(np.abs(x), nan=math.inf)
                hit_final = (final >= limit) & ~diverged & ~hit
                crossing[hit_final] = final[hit_final]
                diverged |= hit_final
            if hit.any():
                for j in np.flatnonzero(hit):
                    crossing[j] = block[np.argmax(over[:, j]), j]
                diverged |= hit
                x[hit] = 0.0
                xhat_pred[hit] = 0.0
                if diverged.all():
                    logger.debug(f"All {n} trials in batch diverged by t={stop}")
                    break

    q, r_weight = params.Q, params.R
    results = []
    for j in range(n):
        if diverged[j]:
            results.append(_diverged(float(crossing[j])))
            continue
        xj = np.ascontiguousarray(xs[burn_in:, j])
        uj = np.ascontiguousarray(us[burn_in:, j])
        cost = float(np.mean(q * xj * xj + r_weight * uj * uj))
        entropy = channel.entropy_of_indices(bins[burn_in:, j]) if quantized else None
        results.append(EpisodeResult(avg_cost=cost, entropy_bits=entropy, diverged=False,
                                     final_state_mag=abs(float(x[j]))))
    return results, ys


def _simulate_chunk(task) -> List[EpisodeResult]:
    cfg, plan, indices = task
    return _simulate_batch(cfg, plan, indices)[0]


def design_codebook(cfg: ExperimentConfig, levels: int) -> channel.LloydMaxDesign:
    """Train a Lloyd-Max codebook on measurements from a perfect-link pilot run"""
    pilot_cfg = with_channel(cfg, ChannelSpec.perfect())
    plan = plan_link(pilot_cfg)
    results, ys = _simulate_batch(pilot_cfg, plan, [0], stage=PILOT_STAGE, keep_measurements=True)
    if results[0].diverged:
        raise AllTrialsDiverged("Pilot run for codebook training diverged", 1)
    samples = ys[cfg.burn_in:, 0]
    design = channel.lloyd_max_design(samples, levels)
    if design.empty_cells_recovered:
        logger.warning(f"Lloyd-Max K={levels}: {design.empty_cells_recovered} empty cell(s) re-seeded")
    logger.info(f"Lloyd-Max K={levels} trained on {samples.size} pilot samples, mse={design.mse:.6g}")
    return design


def run_trials(cfg: ExperimentConfig, trial_indices: Optional[Sequence[int]] = None, workers: int = 1,
               plan: Optional[LinkPlan] = None) -> List[EpisodeResult]:
    """Results in trial-index order"""
    indices = list(range(cfg.trials)) if trial_indices is None else list(trial_indices)
    if plan is None:
        plan = plan_link(cfg)
    size = MAX_BATCH
    if workers > 1:
        size = min(MAX_BATCH, max(1, math.ceil(len(indices) / workers)))
    batches = [indices[i:i + size] for i in range(0, len(indices), size)]
    results = []
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for part in executor.map(_simulate_chunk, [(cfg, plan, batch) for batch in batches]):
                results.extend(part)
        return results
    for batch in batches:
        results.extend(_simulate_batch(cfg, plan, batch)[0])
    return results


def run_episode(cfg: ExperimentConfig, trial_index: int) -> EpisodeResult:
    cfg = validate(cfg)
    return _simulate_batch(cfg, plan_link(cfg), [trial_index])[0][0]


def summarize(results: Sequence[EpisodeResult]) -> MonteCarloSummary:
    """Mean and standard error over non-diverged trials"""
    alive = [res for res in results if not res.diverged]
    fraction = 1.0 - len(alive) / len(results)
    if not alive:
        raise AllTrialsDiverged(f"All {len(results)} trials diverged", len(results))
    costs = np.array([res.avg_cost for res in alive])
    stderr = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    entropies = [res.entropy_bits for res in alive if res.entropy_bits is not None]
    entropy = float(np.mean(entropies)) if entropies else None
    return MonteCarloSummary(mean=float(costs.mean()), stderr=stderr, diverged_fraction=fraction,
                             entropy_bits=entropy)


def monte_carlo(cfg: ExperimentConfig, workers: int = 1, plan: Optional[LinkPlan] = None) -> MonteCarloSummary:
    cfg = validate(cfg)
    summary = summarize(run_trials(cfg, workers=workers, plan=plan))
    if summary.diverged_fraction > 0:
        logger.warning(f"{summary.diverged_fraction:.0%} of trials diverged and are excluded from the mean")
    return summary


# Sweeps

def _simulated(cfg: ExperimentConfig, workers: int,
               plan: Optional[LinkPlan] = None) -> Tuple[Optional[MonteCarloSummary], float]:
    try:
        summary = monte_carlo(cfg, workers=workers, plan=plan)
    except AllTrialsDiverged as e:
        logger.warning(f"{e}; point recorded as diverged")
        return None, 1.0
    return summary, summary.diverged_fraction


def snr_sweep(cfg: ExperimentConfig, snrs: Sequence[float], workers: int = 1) -> List[SweepRecord]:
    """Simulated, computed and bound cost per SNR"""
    cfg = validate(cfg)
    if cfg.channel.kind is not ChannelKind.AWGN:
        raise InvalidConfig([f"channel.kind: snr_sweep needs an awgn channel (got {cfg.channel.kind.value})"])
    ctx = bounds.bound_context(cfg.params, cfg.disturbance)
    records = []
    for snr in snrs:
        point = validate(with_channel(cfg, ChannelSpec.awgn(snr)))
        try:
            computed = riccati.computed_cost_per_stage(cfg.params, snr,
                                                       divergence_threshold=cfg.divergence_threshold)
        except riccati.Diverged:
            computed = None
        try:
            bound = bounds.cost_lower_bound_vs_snr(snr, ctx)
        except bounds.RateBelowStabilization:
            bound = math.inf
        summary, fraction = _simulated(point, workers)
        records.append(SweepRecord(
            control_var=snr,
            info_bits=bounds.awgn_capacity(snr),
            sim_cost_mean=summary.mean if summary else None,
            sim_cost_stderr=summary.stderr if summary else None,
            computed_cost=computed,
            bound_cost=bound,
            diverged_fraction=fraction,
        ))
        logger.info(f"snr={snr}: sim={records[-1].sim_cost_mean} computed={computed} bound={bound}")
    return records


def _quantizer_for(scheme: QuantizerScheme, value: float) -> QuantizerSpec:
    if scheme is QuantizerScheme.UNIFORM:
        return QuantizerSpec(scheme=scheme, step=value)
    if value != int(value):
        raise InvalidConfig([f"channel.quantizer.levels: level count must be an integer (got {value})"])
    return QuantizerSpec(scheme=scheme, levels=int(value))


def _quantized_sweep(cfg: ExperimentConfig, values: Sequence[float], workers: int,
                     ctx: bounds.BoundContext) -> List[SweepRecord]:
    scheme = cfg.channel.scheme
    records = []
    for value in values:
        point = validate(with_channel(cfg, ChannelSpec(kind=ChannelKind.QUANTIZED,
                                                       quantizer=_quantizer_for(scheme, value))))
        try:
            plan = plan_link(point)
        except (AllTrialsDiverged, channel.DegenerateSamples) as e:
            logger.warning(f"{scheme.value} {value}: no codebook ({e}); point recorded as diverged")
            plan = None
        summary, fraction = _simulated(point, workers, plan) if plan is not None else (None, 1.0)
        info = summary.entropy_bits if summary else None
        bound = None
        if info is not None:
            try:
                bound = bounds.cost_lower_bound_at_rate(info, ctx)
            except bounds.RateBelowStabilization:
                bound = math.inf
        records.append(SweepRecord(
            control_var=float(value),
            info_bits=info,
            sim_cost_mean=summary.mean if summary else None,
            sim_cost_stderr=summary.stderr if summary else None,
            computed_cost=None,
            bound_cost=bound,
            diverged_fraction=fraction,
        ))
        logger.info(f"{scheme.value} {value}: sim={records[-1].sim_cost_mean} bits={info} bound={bound}")
    return records


def _require_quantized(cfg: ExperimentConfig, operation: str) -> None:
    if cfg.channel.kind is not ChannelKind.QUANTIZED:
        raise InvalidConfig([f"channel.kind: {operation} needs a quantized channel (got {cfg.channel.kind.value})"])


def rate_sweep(cfg: ExperimentConfig, steps: Sequence[float], workers: int = 1) -> List[SweepRecord]:
    """Per step size (uniform) or level count (Lloyd-Max): entropy, simulated cost, rate bound"""
    cfg = validate(cfg)
    _require_quantized(cfg, "rate_sweep")
    return _quantized_sweep(cfg, steps, workers, bounds.bound_context(cfg.params, cfg.disturbance))


def uncertain_a_sweep(cfg: ExperimentConfig, steps: Sequence[float], workers: int = 1) -> List[SweepRecord]:
    """As rate_sweep with a random plant coefficient; bound_cost is the fixed-A bound at the mean A"""
    cfg = validate(cfg)
    if not cfg.uncertain_a.enabled:
        raise InvalidConfig(["uncertain_a.enabled: uncertain_a_sweep needs uncertain_a enabled"])
    _require_quantized(cfg, "uncertain_a_sweep")
    reference = cfg.params.model_copy(update={"A": cfg.uncertain_a.mean})
    logger.info(f"bound_cost is the fixed-A reference at A={cfg.uncertain_a.mean}, not a bound for random A")
    return _quantized_sweep(cfg, steps, workers, bounds.bound_context(reference, cfg.disturbance))
