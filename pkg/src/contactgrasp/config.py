"""Pipeline configuration: defaults < config file < environment < flags."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .errors import ConfigError

ENV_PREFIX = "CONTACTGRASP_"


@dataclass
class PipelineConfig:
    hand: str = ""                      # empty -> bundled five-finger hand
    seed: int = 0
    jobs: int = 1
    max_points: int = 4096              # clouds above this get subsampled

    # geometry / strategy
    strategy_cloud: str = "object"      # or "table": which cloud picks the strategy
    alignment_threshold_deg: float = 30.0
    cylinder_ratio_threshold: float = 1.5

    # contact generation
    n_slices: int = 8
    eps_surf: float = 0.005
    d_min: float = 0.008
    r_nbr: float = 0.010
    friction: float = 0.5
    n_cone_samples: int = 8
    finger_span: float = 0.072
    refine_contact_iters: int = 2

    # retargeting
    alpha: float = 1.0
    beta: float = 0.05
    retarget_max_iters: int = 200
    retarget_tol: float = 1e-8
    retarget_passes: int = 2
    retarget_success_residual: float = 0.03
    y_offset: float = 0.03
    roll_deg: float = 10.0
    pitch_deg: float = 20.0

    # collision refinement
    kp: float = 50.0
    kd: float = 14.0
    sim_dt: float = 0.005
    sim_max_steps: int = 1200
    freeze_force: float = 2.0
    stiffness: float = 1000.0
    fingertip_radius: float = 0.008
    penetration_tol: float = 0.001
    include_table_in_refine: bool = True
    pregrasp_offset: float = 0.02

    # clustering / gating
    k_experts: int = 3
    central_fraction: float = 0.3
    gate_lr: float = 0.5
    gate_epochs: int = 2000
    hard_case_threshold: float = 0.5

    # rewards
    success_delta: float = 0.05
    lambda_reach: float = 5.0
    lambda_lift: float = 5.0

    def validate(self) -> "PipelineConfig":
        pos = ("max_points", "alignment_threshold_deg", "cylinder_ratio_threshold",
               "n_slices", "eps_surf", "d_min", "r_nbr", "n_cone_samples",
               "finger_span", "alpha", "retarget_max_iters", "retarget_tol",
               "retarget_passes",
               "kp", "kd", "sim_dt", "sim_max_steps", "stiffness",
               "fingertip_radius", "penetration_tol", "k_experts", "gate_lr",
               "gate_epochs", "success_delta", "lambda_reach", "lambda_lift")
        for name in pos:
            if getattr(self, name) <= 0:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        for name in ("beta", "friction", "freeze_force", "pregrasp_offset",
                     "hard_case_threshold", "refine_contact_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(name, f"must be non-negative, got {getattr(self, name)}")
        if self.jobs < 1:
            raise ConfigError("jobs", f"must be >= 1, got {self.jobs}")
        if self.strategy_cloud not in ("object", "table"):
            raise ConfigError("strategy_cloud", f"must be object or table, got {self.strategy_cloud!r}")
        if not 0.0 < self.central_fraction <= 1.0:
            raise ConfigError("central_fraction", f"must be in (0, 1], got {self.central_fraction}")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, raw, target_type) -> object:
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
        raise ConfigError(name, f"cannot read {raw!r} as a boolean")
    try:
        return target_type(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(name, f"cannot read {raw!r} as {target_type.__name__}") from e


def load_config(path: str | None = None, env: dict | None = None,
                overrides: dict | None = None) -> PipelineConfig:
    """Build a validated config from the three layers, later layers winning."""
    values: dict = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                body = json.load(f)
        except OSError as e:
            raise ConfigError("<config>", f"cannot read {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError("<config>", f"{path} is not valid JSON: {e.msg}") from e
        if not isinstance(body, dict):
            raise ConfigError("<config>", "config file must hold a JSON object")
        for key, val in body.items():
            if key not in _FIELDS:
                raise ConfigError(key, "unknown configuration field")
            values[key] = _coerce(key, val, type(_FIELDS[key].default))
    if env is None:
        env = os.environ
    for key, fld in _FIELDS.items():
        env_name = ENV_PREFIX + key.upper()
        if env_name in env:
            values[key] = _coerce(key, env[env_name], type(fld.default))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(key, "unknown configuration field")
        values[key] = _coerce(key, val, type(_FIELDS[key].default))
    return PipelineConfig(**values).validate()


def config_hash(config: PipelineConfig) -> str:
    """Stable short digest of the full configuration."""
    body = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(body.encode()).hexdigest()[:16]
