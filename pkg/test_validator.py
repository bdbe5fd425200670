#!/usr/bin/env python3
"""
Validator Test Script

Tests config invariant checks, JSON loading and the convenience functions.
"""

import json

import pytest

from model import (
    ChannelSpec,
    ExperimentConfig,
    NoiseFamily,
    NoiseSpec,
    Observed,
    QuantizerSpec,
    SystemParams,
    UncertainA,
)
from validator import (
    InvalidConfig,
    config_from_json,
    dump_config,
    is_valid,
    load_config,
    validate,
    validate_config,
)


def test_default_config_is_valid():
    cfg = ExperimentConfig()
    assert is_valid(cfg)
    assert validate(cfg) is cfg
    assert validate_config(cfg) == {"valid": True, "violations": []}


def test_all_violations_are_reported():
    cfg = ExperimentConfig(params=SystemParams(R=0.0, V=0.5), horizon=10, burn_in=10)
    with pytest.raises(InvalidConfig) as excinfo:
        validate(cfg)
    paths = excinfo.value.paths
    assert "params.R" in paths
    assert "params.V" in paths
    assert "burn_in" in paths


def test_validate_config_dict_shape():
    result = validate_config(ExperimentConfig(params=SystemParams(Q=-1.0)))
    assert result["valid"] is False
    assert any(v.startswith("params.Q") for v in result["violations"])


def test_fully_observed_needs_unit_c():
    assert not is_valid(ExperimentConfig(params=SystemParams(C=2.0)))


def test_partially_observed_allows_measurement_noise():
    params = SystemParams(V=1.0, observed=Observed.PARTIALLY)
    assert is_valid(ExperimentConfig(params=params))


def test_disturbance_must_match_w():
    cfg = ExperimentConfig(params=SystemParams(W=2.0), disturbance=NoiseSpec(stddev=1.0))
    with pytest.raises(InvalidConfig) as excinfo:
        validate(cfg)
    assert excinfo.value.paths == ["disturbance.stddev"]
    assert is_valid(ExperimentConfig(params=SystemParams(W=2.0),
                                     disturbance=NoiseSpec(family=NoiseFamily.LAPLACE, stddev=2.0 ** 0.5)))


def test_zero_w_ignores_disturbance_law():
    assert is_valid(ExperimentConfig(params=SystemParams(W=0.0), disturbance=NoiseSpec(stddev=5.0)))


@pytest.mark.parametrize("channel", [
    ChannelSpec(kind="awgn"),
    ChannelSpec.awgn(0.0),
    ChannelSpec.awgn(-1.0),
    ChannelSpec(kind="quantized"),
    ChannelSpec.uniform(0.0),
    ChannelSpec.lloyd_max(1),
])
def test_bad_channels(channel):
    with pytest.raises(InvalidConfig) as excinfo:
        validate(ExperimentConfig(channel=channel))
    assert all(path.startswith("channel") for path in excinfo.value.paths)


@pytest.mark.parametrize("channel,path", [
    (ChannelSpec(kind="perfect", snr=5.0), "channel.snr"),
    (ChannelSpec(kind="awgn", snr=5.0, quantizer=QuantizerSpec(step=0.1)), "channel.quantizer"),
    (ChannelSpec(kind="perfect", quantizer=QuantizerSpec(step=0.1)), "channel.quantizer"),
    (ChannelSpec(kind="quantized", snr=5.0, quantizer=QuantizerSpec(step=0.1)), "channel.snr"),
    (ChannelSpec(kind="quantized", quantizer=QuantizerSpec(step=0.1, levels=8)), "channel.quantizer.levels"),
    (ChannelSpec(kind="quantized", quantizer=QuantizerSpec(scheme="lloyd_max", step=0.1, levels=8)),
     "channel.quantizer.step"),
])
def test_channel_fields_of_other_kinds_are_rejected(channel, path):
    with pytest.raises(InvalidConfig) as excinfo:
        validate(ExperimentConfig(channel=channel))
    assert excinfo.value.paths == [path]


def test_zero_input_gain_needs_zero_state_weight():
    with pytest.raises(InvalidConfig) as excinfo:
        validate(ExperimentConfig(params=SystemParams(B=0.0, Q=1.0)))
    assert excinfo.value.paths == ["params.B"]
    assert is_valid(ExperimentConfig(params=SystemParams(B=0.0, Q=0.0)))


@pytest.mark.parametrize("horizon,valid", [(9, False), (10, True)])
def test_minimum_horizon(horizon, valid):
    assert is_valid(ExperimentConfig(horizon=horizon, burn_in=0)) is valid


def test_uncertain_a_spread_must_be_non_negative():
    assert not is_valid(ExperimentConfig(uncertain_a=UncertainA(enabled=True, spread=-0.1)))
    # disabled sections are not checked
    assert is_valid(ExperimentConfig(uncertain_a=UncertainA(enabled=False, spread=-0.1)))


@pytest.mark.parametrize("seed", [-1, 2 ** 64])
def test_seed_must_fit_u64(seed):
    assert not is_valid(ExperimentConfig(master_seed=seed))


def test_unknown_key_is_rejected():
    with pytest.raises(InvalidConfig) as excinfo:
        config_from_json(json.dumps({"params": {"A": 2.0, "Z": 1.0}}))
    assert excinfo.value.paths == ["params.Z"]


def test_bad_json_is_invalid_config():
    with pytest.raises(InvalidConfig):
        config_from_json("{not json")


def test_manifest_document_yields_its_config():
    cfg = ExperimentConfig(trials=3, master_seed=11)
    manifest = {"config_echo": json.loads(cfg.dump_json()), "grid": [1.0], "warnings": []}
    assert config_from_json(json.dumps(manifest)) == cfg


def test_dump_then_load(tmp_path):
    cfg = ExperimentConfig(channel=ChannelSpec.uniform(0.25), trials=5)
    path = tmp_path / "cfg.json"
    dump_config(cfg, path)
    assert load_config(path) == cfg
