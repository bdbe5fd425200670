"""
Plant, noise, channel and experiment configuration for netlqg

Config documents are pydantic models: JSON in, JSON out, unknown keys rejected.
Semantic invariants (R > 0, fully observed => V = 0, ...) are checked in validator.py.
"""

import logging
import math
from enum import Enum, IntEnum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "0.1.0"
DEFAULT_DIVERGENCE_THRESHOLD = 1e12

LN2 = math.log(2.0)


class NetLQGError(Exception):
    """Base class for every error raised by netlqg"""


class Observed(str, Enum):
    FULLY = "fully"
    PARTIALLY = "partially"


class NoiseFamily(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    UNIFORM = "uniform"


class ChannelKind(str, Enum):
    PERFECT = "perfect"
    AWGN = "awgn"
    QUANTIZED = "quantized"


class QuantizerScheme(str, Enum):
    UNIFORM = "uniform"
    LLOYD_MAX = "lloyd_max"


class UncertainFamily(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class StreamPurpose(IntEnum):
    """One independent random stream per kind of draw inside a trial"""
    INITIAL_STATE = 0
    DISTURBANCE = 1
    MEASUREMENT = 2
    CHANNEL = 3
    PLANT_A = 4


MAIN_STAGE = 0
PILOT_STAGE = 1


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemParams(_Document):
    """Scalar plant x' = A x + B u + w, y = C x + v, stage cost Q x^2 + R u^2"""
    A: float = 2.0
    B: float = 1.0
    C: float = 1.0
    Q: float = 1.0
    R: float = 1.0
    W: float = 1.0
    V: float = 0.0
    observed: Observed = Observed.FULLY

    @property
    def fully_observed(self) -> bool:
        return self.observed is Observed.FULLY


class NoiseSpec(_Document):
    """Zero-mean disturbance law; stddev is sigma for every family"""
    family: NoiseFamily = NoiseFamily.GAUSSIAN
    stddev: float = 1.0

    @property
    def variance(self) -> float:
        return self.stddev * self.stddev


class QuantizerSpec(_Document):
    scheme: QuantizerScheme = QuantizerScheme.UNIFORM
    step: Optional[float] = None
    levels: Optional[int] = None


class ChannelSpec(_Document):
    """Observer to controller link: perfect, AWGN(snr) or quantized"""
    kind: ChannelKind = ChannelKind.PERFECT
    snr: Optional[float] = None
    quantizer: Optional[QuantizerSpec] = None

    @classmethod
    def perfect(cls) -> "ChannelSpec":
        return cls(kind=ChannelKind.PERFECT)

    @classmethod
    def awgn(cls, snr: float) -> "ChannelSpec":
        return cls(kind=ChannelKind.AWGN, snr=snr)

    @classmethod
    def uniform(cls, step: float) -> "ChannelSpec":
        return cls(kind=ChannelKind.QUANTIZED,
                   quantizer=QuantizerSpec(scheme=QuantizerScheme.UNIFORM, step=step))

    @classmethod
    def lloyd_max(cls, levels: int) -> "ChannelSpec":
        return cls(kind=ChannelKind.QUANTIZED,
                   quantizer=QuantizerSpec(scheme=QuantizerScheme.LLOYD_MAX, levels=levels))

    @property
    def scheme(self) -> Optional[QuantizerScheme]:
        return self.quantizer.scheme if self.quantizer is not None else None


class UncertainA(_Document):
    """Per-step random plant coefficient a_t; spread is stddev (gaussian) or half-width (uniform)"""
    enabled: bool = False
    family: UncertainFamily = UncertainFamily.GAUSSIAN
    mean: float = 2.0
    spread: float = 0.0


class ExperimentConfig(_Document):
    params: SystemParams = Field(default_factory=SystemParams)
    disturbance: NoiseSpec = Field(default_factory=NoiseSpec)
    channel: ChannelSpec = Field(default_factory=ChannelSpec)
    uncertain_a: UncertainA = Field(default_factory=UncertainA)
    horizon: int = 100_000
    burn_in: int = 10_000
    trials: int = 20
    master_seed: int = 2016
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD

    @property
    def controller_a(self) -> float:
        """The A the controller and filter are designed for (mean A under uncertainty)"""
        return self.uncertain_a.mean if self.uncertain_a.enabled else self.params.A

    def dump_json(self) -> str:
        return self.model_dump_json(indent=2)


def with_channel(cfg: ExperimentConfig, channel: ChannelSpec) -> ExperimentConfig:
    return cfg.model_copy(update={"channel": channel})


def with_overrides(cfg: ExperimentConfig, trials: Optional[int] = None,
                   horizon: Optional[int] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Copy of cfg with run-size overrides; burn-in shrinks to T/10 if it no longer fits"""
    update = {}
    if trials is not None:
        update["trials"] = trials
    if horizon is not None:
        update["horizon"] = horizon
        if cfg.burn_in >= horizon:
            update["burn_in"] = horizon // 10
            logger.info(f"burn_in {cfg.burn_in} does not fit horizon {horizon}; using {horizon // 10}")
    if seed is not None:
        update["master_seed"] = seed
    return cfg.model_copy(update=update)


# Random streams

def random_stream(master_seed: int, trial_index: int, purpose: int,
                  stage: int = MAIN_STAGE) -> np.random.Generator:
    """Independent PCG64 stream for one (stage, trial, purpose) triple"""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stage, trial_index, int(purpose)))
    return np.random.Generator(np.random.PCG64(seq))


def sample_noise_array(spec: NoiseSpec, rng: np.random.Generator, size=None):
    if spec.family is NoiseFamily.GAUSSIAN:
        return rng.normal(0.0, spec.stddev, size)
    if spec.family is NoiseFamily.LAPLACE:
        # scale b = sigma / sqrt(2) gives variance 2 b^2 = sigma^2
        return rng.laplace(0.0, spec.stddev / math.sqrt(2.0), size)
    half_width = spec.stddev * math.sqrt(3.0)
    return rng.uniform(-half_width, half_width, size)


def sample_noise(spec: NoiseSpec, rng: np.random.Generator) -> float:
    return float(sample_noise_array(spec, rng))


def differential_entropy(spec: NoiseSpec) -> float:
    """Closed-form differential entropy in nats"""
    sigma = spec.stddev
    if spec.family is NoiseFamily.GAUSSIAN:
        return 0.5 * math.log(2.0 * math.pi * math.e) + math.log(sigma)
    if spec.family is NoiseFamily.LAPLACE:
        return 1.0 + math.log(math.sqrt(2.0)) + math.log(sigma)
    return math.log(2.0 * math.sqrt(3.0)) + math.log(sigma)


# Reporting helpers

def nats_to_bits(value: float) -> float:
    return value / LN2


def format_number(value: Optional[float]) -> str:
    """9 significant digits; empty for absent values"""
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.9g}"
