"""
Named experiment setups with their default sweep grids

All presets share the unstable plant A=2, B=C=Q=R=W=1.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

from model import (
    ChannelSpec,
    ExperimentConfig,
    NoiseFamily,
    NoiseSpec,
    Observed,
    SystemParams,
    UncertainA,
    UncertainFamily,
)

STEP_GRID = (1.0, 0.5, 0.25, 0.1, 0.01)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    command: str
    config: ExperimentConfig
    grid: Tuple[float, ...]


_FULLY = SystemParams(A=2.0, B=1.0, C=1.0, Q=1.0, R=1.0, W=1.0, V=0.0, observed=Observed.FULLY)
_PARTIALLY = _FULLY.model_copy(update={"V": 1.0, "observed": Observed.PARTIALLY})
_RANDOM_A = UncertainA(enabled=True, family=UncertainFamily.GAUSSIAN, mean=2.0, spread=0.2)

PRESETS: Dict[str, Preset] = {
    preset.name: preset for preset in (
        Preset(
            name="fig2",
            description="AWGN link, Laplace disturbance, fully observed: simulated vs computed cost and bound",
            command="awgn-sweep",
            config=ExperimentConfig(params=_FULLY, disturbance=NoiseSpec(family=NoiseFamily.LAPLACE, stddev=1.0),
                                    channel=ChannelSpec.awgn(10.0)),
            grid=(4.0, 5.0, 8.0, 16.0, 64.0, 1024.0),
        ),
        Preset(
            name="fig3",
            description="Uniform quantizer, Gaussian disturbance, fully observed",
            command="rate-sweep",
            config=ExperimentConfig(params=_FULLY, channel=ChannelSpec.uniform(0.1)),
            grid=STEP_GRID,
        ),
        Preset(
            name="fig4",
            description="Uniform quantizer, Gaussian disturbance, partially observed (V=1)",
            command="rate-sweep",
            config=ExperimentConfig(params=_PARTIALLY, channel=ChannelSpec.uniform(0.1)),
            grid=STEP_GRID,
        ),
        Preset(
            name="fig5",
            description="Uniform quantizer, random A ~ N(2, 0.2^2), fully observed",
            command="uncertain-a-sweep",
            config=ExperimentConfig(params=_FULLY, channel=ChannelSpec.uniform(0.1), uncertain_a=_RANDOM_A),
            grid=STEP_GRID,
        ),
        Preset(
            name="fig5-lloyd-max",
            description="Lloyd-Max codebook trained on a pilot run, random A ~ N(2, 0.2^2), fully observed",
            command="uncertain-a-sweep",
            config=ExperimentConfig(params=_FULLY, channel=ChannelSpec.lloyd_max(16), uncertain_a=_RANDOM_A),
            grid=(4.0, 8.0, 16.0, 32.0),
        ),
    )
}

# preset used by each command when neither --config nor --preset is given
DEFAULT_FOR_COMMAND = {
    "bound": "fig3",
    "awgn-sweep": "fig2",
    "rate-sweep": "fig3",
    "uncertain-a-sweep": "fig5",
}

BOUND_RATE_GRID = (1.1, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})") from None


def preset_names() -> List[str]:
    return sorted(PRESETS)
