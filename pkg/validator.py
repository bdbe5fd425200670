#!/usr/bin/env python3
"""
Validation utilities for netlqg
Checks experiment configs against the plant, noise, channel and run invariants
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

from pydantic import ValidationError

from model import (
    ChannelKind,
    ChannelSpec,
    ExperimentConfig,
    NetLQGError,
    NoiseSpec,
    QuantizerScheme,
    SystemParams,
    UncertainA,
)

logger = logging.getLogger(__name__)

U64_MAX = 2 ** 64 - 1
MIN_HORIZON = 10

# An ExperimentConfig that has passed ConfigValidator
ValidatedConfig = ExperimentConfig


class InvalidConfig(NetLQGError):
    """Config failed validation; carries every violation found, not just the first"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("Invalid config: " + "; ".join(self.violations))

    @property
    def paths(self) -> List[str]:
        return [v.split(":", 1)[0] for v in self.violations]


def _finite(value: float) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


class ConfigValidator:
    """Validator for netlqg experiment configs"""

    def __init__(self, variance_rel_tol: float = 1e-9):
        self.variance_rel_tol = variance_rel_tol

    def _check_params(self, params: SystemParams, path: str = "params") -> List[str]:
        """Plant coefficients and noise variances"""
        errors = []
        for name in ("A", "B", "C", "Q", "R", "W", "V"):
            value = getattr(params, name)
            if not _finite(value):
                errors.append(f"{path}.{name}: must be finite (got {value})")
        if _finite(params.R) and not params.R > 0:
            errors.append(f"{path}.R: must be > 0 (got {params.R})")
        if _finite(params.Q) and params.Q > 0 and params.B == 0.0:
            errors.append(f"{path}.B: must be non-zero when Q > 0 (got {params.B})")
        for name in ("Q", "W", "V"):
            value = getattr(params, name)
            if _finite(value) and value < 0:
                errors.append(f"{path}.{name}: must be >= 0 (got {value})")
        if params.fully_observed:
            if params.C != 1.0:
                errors.append(f"{path}.C: must be 1 for a fully observed plant (got {params.C})")
            if params.V != 0.0:
                errors.append(f"{path}.V: must be 0 for a fully observed plant (got {params.V})")
        return errors

    def _check_noise(self, spec: NoiseSpec, params: SystemParams, path: str = "disturbance") -> List[str]:
        """Disturbance law must agree with W"""
        if not _finite(spec.stddev) or spec.stddev < 0:
            return [f"{path}.stddev: must be finite and >= 0 (got {spec.stddev})"]
        if not _finite(params.W) or params.W == 0.0:
            # W = 0 switches the disturbance off whatever its law says
            return []
        if spec.stddev == 0.0:
            return [f"{path}.stddev: must be > 0 when params.W > 0"]
        if not math.isclose(spec.variance, params.W, rel_tol=self.variance_rel_tol):
            return [f"{path}.stddev: stddev^2 = {spec.variance} does not match params.W = {params.W}"]
        return []

    def _check_channel(self, channel: ChannelSpec, path: str = "channel") -> List[str]:
        """Only the fields of the active kind (and quantizer scheme) may be set"""
        errors = []
        kind = channel.kind.value
        if channel.kind is ChannelKind.AWGN:
            if channel.snr is None or not _finite(channel.snr) or not channel.snr > 0:
                errors.append(f"{path}.snr: must be finite and > 0 for an AWGN channel (got {channel.snr})")
        elif channel.snr is not None:
            errors.append(f"{path}.snr: only allowed for an AWGN channel (kind is {kind})")

        quantizer = channel.quantizer
        if channel.kind is not ChannelKind.QUANTIZED:
            if quantizer is not None:
                errors.append(f"{path}.quantizer: only allowed for a quantized channel (kind is {kind})")
        elif quantizer is None:
            errors.append(f"{path}.quantizer: required for a quantized channel")
        elif quantizer.scheme is QuantizerScheme.UNIFORM:
            if quantizer.step is None or not _finite(quantizer.step) or not quantizer.step > 0:
                errors.append(f"{path}.quantizer.step: must be finite and > 0 (got {quantizer.step})")
            if quantizer.levels is not None:
                errors.append(f"{path}.quantizer.levels: not used by the uniform quantizer")
        else:
            if quantizer.levels is None or quantizer.levels < 2:
                errors.append(f"{path}.quantizer.levels: must be >= 2 (got {quantizer.levels})")
            if quantizer.step is not None:
                errors.append(f"{path}.quantizer.step: not used by the Lloyd-Max quantizer")
        return errors

    def _check_uncertain_a(self, uncertain: UncertainA, path: str = "uncertain_a") -> List[str]:
        if not uncertain.enabled:
            return []
        errors = []
        if not _finite(uncertain.mean):
            errors.append(f"{path}.mean: must be finite (got {uncertain.mean})")
        if not _finite(uncertain.spread) or uncertain.spread < 0:
            errors.append(f"{path}.spread: must be finite and >= 0 (got {uncertain.spread})")
        return errors

    def _check_run(self, cfg: ExperimentConfig) -> List[str]:
        """Horizon, burn-in, trial count, seed, divergence threshold"""
        errors = []
        if cfg.horizon < MIN_HORIZON:
            errors.append(f"horizon: must be >= {MIN_HORIZON} (got {cfg.horizon})")
        if cfg.burn_in < 0 or cfg.burn_in >= cfg.horizon:
            errors.append(f"burn_in: must satisfy 0 <= burn_in < horizon (got {cfg.burn_in}, horizon {cfg.horizon})")
        if cfg.trials < 1:
            errors.append(f"trials: must be >= 1 (got {cfg.trials})")
        if not 0 <= cfg.master_seed <= U64_MAX:
            errors.append(f"master_seed: must be an unsigned 64-bit integer (got {cfg.master_seed})")
        if not _finite(cfg.divergence_threshold) or not cfg.divergence_threshold > 0:
            errors.append(f"divergence_threshold: must be finite and > 0 (got {cfg.divergence_threshold})")
        return errors

    def violations(self, cfg: ExperimentConfig) -> List[str]:
        """All invariant violations in cfg, in document order"""
        return (
            self._check_params(cfg.params)
            + self._check_noise(cfg.disturbance, cfg.params)
            + self._check_channel(cfg.channel)
            + self._check_uncertain_a(cfg.uncertain_a)
            + self._check_run(cfg)
        )

    def validate_config(self, cfg: ExperimentConfig) -> Dict:
        """Validate config and return result"""
        found = self.violations(cfg)
        if found:
            return {
                "valid": False,
                "error": f"{len(found)} invariant violation(s)",
                "violations": found,
            }
        return {"valid": True, "violations": []}

    def validate_or_raise(self, cfg: ExperimentConfig) -> ValidatedConfig:
        found = self.violations(cfg)
        if found:
            raise InvalidConfig(found)
        return cfg

    def parse(self, data: Dict[str, Any]) -> ValidatedConfig:
        """Structural parse (pydantic) followed by the semantic checks"""
        if not isinstance(data, dict):
            raise InvalidConfig([f"<document>: expected a JSON object (got {type(data).__name__})"])
        if "config_echo" in data:
            # a run manifest; the config it echoes is what we want
            data = data["config_echo"]
        try:
            cfg = ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise InvalidConfig([
                f"{'.'.join(str(part) for part in err['loc']) or '<document>'}: {err['msg']}"
                for err in e.errors()
            ])
        return self.validate_or_raise(cfg)


# Global validator instance
validator = ConfigValidator()


# Convenience functions
def validate(cfg: ExperimentConfig) -> ValidatedConfig:
    """Validate a config, raising InvalidConfig with every violation"""
    return validator.validate_or_raise(cfg)


def validate_config(cfg: ExperimentConfig) -> Dict:
    return validator.validate_config(cfg)


def is_valid(cfg: ExperimentConfig) -> bool:
    """Quick check if a config is valid"""
    return not validator.violations(cfg)


def config_from_json(text: str) -> ValidatedConfig:
    """Parse a config (or a run manifest) from JSON text"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidConfig([f"<document>: not valid JSON ({e})"])
    return validator.parse(data)


def load_config(path: Union[str, Path]) -> ValidatedConfig:
    path = Path(path)
    logger.debug(f"Loading config from {path}")
    return config_from_json(path.read_text(encoding="utf-8"))


def load_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw JSON document; run manifests carry a grid next to their config echo"""
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidConfig([f"<document>: not valid JSON ({e})"])


def dump_config(cfg: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(cfg.dump_json() + "\n", encoding="utf-8")


if __name__ == "__main__":
    print("netlqg Config Validator Test")
    print("=" * 40)

    good = ExperimentConfig()
    bad = ExperimentConfig(params=SystemParams(R=0.0, V=0.5), horizon=10, burn_in=10)
    for name, cfg in (("default", good), ("broken", bad)):
        print(f"Config '{name}': {validate_config(cfg)}")
