"""Run configuration: JSON documents with preset inheritance.

A config either stands alone or names a preset through ``extends``; the
preset supplies every default and the document overrides keys (deep
merge).  Validation happens before any run starts and reports the
offending key path.
"""

import copy
import json

import numpy as np

from .errors import ConfigError
from .invlearn import (
    PendulumBaseline,
    Trajectory,
    selection_from_descriptor,
)
from .mlp import TrainingConfig
from .plantsim import (
    PendulumCartParams,
    StateFeedbackController,
    nmp_surrogate_axis,
    pendulum_cart,
    pendulum_cart_voltage,
)

PRESETS = {
    "pendulum_sim": {
        "system": "pendulum_sim",
        "seed": 0,
        "out_dir": "out/pendulum_sim",
        "plant": {
            "cart_mass": 1.0,
            "pendulum_mass": 0.3,
            "length": 0.6,
            "gravity": 9.81,
        },
        "controller_gain": [-0.8678, -1.808, 25.46, 4.140],
        "rates": {"dt_sim": 0.001, "dt_module": 0.015},
        "divergence_bound": 1000.0,
        "selection": {"variant": "approx_inverse", "n": 3},
        "ablation_selection": {"variant": "augmented_past", "n": 3, "past_count": 1},
        "network": {"hidden": [5, 5], "activation": "tanh"},
        "training": {
            "optimizer": "adam",
            "learning_rate": 0.01,
            "batch_size": 256,
            "epochs": 1200,
            "patience": 1200,
            "validation_fraction": 0.3,
            "lr_schedule": "cosine",
        },
        "data": {
            "amplitudes": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            "periods": [5, 10, 15, 20, 25],
            "duration": 40.0,
            "dataset_size": 20000,
            "transient_skip": 2.0,
        },
        "eval": {
            "periods": [6, 8, 12, 14, 18, 22],
            "amplitude": 2.5,
            "skip": 5.0,
            "ablation_period": 6.0,
            "ablation_duration": 60.0,
        },
        "scenarios": ["fig3", "fig4"],
    },
    "pendulum_voltage": {
        "system": "pendulum_voltage",
        "seed": 0,
        "out_dir": "out/pendulum_voltage",
        "plant": {
            "cart_mass": 1.0,
            "pendulum_mass": 0.2,
            "length": 0.3,
            "gravity": 9.81,
        },
        "motor": {"damping": -7.74, "volts_to_force": 1.73},
        "controller_gain": [-105.6, -55.04, 130.7, 23.67],
        "rates": {"dt_sim": 0.001, "dt_module": 0.015},
        "divergence_bound": 1000.0,
        "selection": {"variant": "approx_inverse", "n": 3},
        "network": {"hidden": [5, 5], "activation": "tanh"},
        "training": {
            "optimizer": "adam",
            "learning_rate": 0.01,
            "batch_size": 256,
            "epochs": 1200,
            "patience": 1200,
            "validation_fraction": 0.3,
            "lr_schedule": "cosine",
        },
        "data": {
            "amplitudes": [0.04, 0.06, 0.08],
            "periods": [5, 6, 7, 8, 9, 10],
            "duration": 40.0,
            "dataset_size": 20000,
            "transient_skip": 2.0,
        },
        "eval": {
            # the two-tone showcase trajectory: 58.5 mm at 5 s plus
            # 6.5 mm at 5.5 s
            "test_tones": [[0.0585, 5.0, 0.0], [0.0065, 5.5, 0.0]],
            "duration": 40.0,
            "skip": 5.0,
        },
        "scenarios": ["fig5"],
    },
    "quad_surrogate": {
        "system": "quad_surrogate",
        "seed": 0,
        "out_dir": "out/quad_surrogate",
        "surrogate": {
            "zero": 1.2,
            "delay_steps": 3,
            "dt": 1.0 / 7.0,
            "poles": None,
        },
        "divergence_bound": 1000.0,
        "selection": {"variant": "relative_approx", "n": 5},
        "m1_selection": {"variant": "relative_exact", "n": 5, "r": 4},
        "network": {"hidden": [128, 128, 128, 128], "activation": "relu"},
        "training": {
            "optimizer": "adam",
            "learning_rate": 0.001,
            "batch_size": 64,
            "epochs": 150,
            "patience": 150,
            "validation_fraction": 0.1,
            "lr_schedule": "constant",
        },
        "data": {
            "duration": 400.0,
            "tones": [
                [0.5, 6.0, 0.0],
                [0.35, 11.0, 1.0],
                [0.3, 17.0, 2.2],
                [0.2, 4.5, 0.7],
            ],
            "transient_skip": 2.0,
        },
        "eval": {
            "count": 10,
            "duration": 40.0,
            "trajectory_seed": 42,
            "amplitude": 1.0,
            "skip": 5.0,
        },
        "scenarios": ["threeway"],
    },
}

_SYSTEMS = set(PRESETS)
_SCENARIOS = {"fig3", "fig4", "fig5", "threeway", "custom"}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _require(cfg, path, types, positive=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"{path}: missing")
        node = node[part]
    if not isinstance(node, types):
        raise ConfigError(f"{path}: expected {types}, got {type(node).__name__}")
    if positive and not node > 0:
        raise ConfigError(f"{path}: must be positive")
    return node


def validate_config(cfg: dict) -> dict:
    system = _require(cfg, "system", str)
    if system not in _SYSTEMS:
        raise ConfigError(f"system: unknown {system!r}")
    _require(cfg, "seed", int)
    _require(cfg, "out_dir", str)
    for scenario in cfg.get("scenarios", []):
        if scenario not in _SCENARIOS:
            raise ConfigError(f"scenarios: unknown {scenario!r}")
    try:
        selection_from_descriptor(cfg["selection"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"selection: {exc}") from exc
    _require(cfg, "training.learning_rate", (int, float), positive=True)
    _require(cfg, "training.epochs", int, positive=True)
    frac = _require(cfg, "training.validation_fraction", (int, float))
    if not 0.0 < frac < 1.0:
        raise ConfigError("training.validation_fraction: must be in (0, 1)")
    _require(cfg, "divergence_bound", (int, float), positive=True)
    if system.startswith("pendulum"):
        for key in ("cart_mass", "pendulum_mass", "length", "gravity"):
            _require(cfg, f"plant.{key}", (int, float), positive=True)
        gain = _require(cfg, "controller_gain", list)
        if len(gain) != 4:
            raise ConfigError("controller_gain: expected 4 entries")
        _require(cfg, "rates.dt_sim", (int, float), positive=True)
        _require(cfg, "rates.dt_module", (int, float), positive=True)
        _require(cfg, "data.duration", (int, float), positive=True)
        if not cfg.get("data", {}).get("amplitudes"):
            raise ConfigError("data.amplitudes: must be non-empty")
        if not cfg.get("data", {}).get("periods"):
            raise ConfigError("data.periods: must be non-empty")
    else:
        zero = _require(cfg, "surrogate.zero", (int, float))
        if zero <= 1.0:
            raise ConfigError("surrogate.zero: must be > 1")
        _require(cfg, "surrogate.dt", (int, float), positive=True)
        delay = _require(cfg, "surrogate.delay_steps", int)
        if delay < 0:
            raise ConfigError("surrogate.delay_steps: must be >= 0")
        if not cfg.get("data", {}).get("tones"):
            raise ConfigError("data.tones: must be non-empty")
    return cfg


def load_config(path) -> dict:
    """Read a JSON config, resolve ``extends``, validate, and return it."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    return resolve_config(doc)


def resolve_config(doc: dict) -> dict:
    base = doc.get("extends")
    if base is not None:
        if base not in PRESETS:
            raise ConfigError(f"extends: unknown preset {base!r}")
        merged = _deep_merge(PRESETS[base], {k: v for k, v in doc.items() if k != "extends"})
    else:
        merged = copy.deepcopy(doc)
    return validate_config(merged)


def preset_config(name: str) -> dict:
    return resolve_config({"extends": name})


# ---------------------------------------------------------------------------
# builders

def build_plant(cfg: dict):
    p = cfg["plant"]
    params = PendulumCartParams(
        cart_mass=p["cart_mass"],
        pendulum_mass=p["pendulum_mass"],
        length=p["length"],
        gravity=p["gravity"],
    )
    if cfg["system"] == "pendulum_voltage":
        motor = cfg.get("motor", {})
        plant = pendulum_cart_voltage(
            params,
            damping=motor.get("damping", -7.74),
            volts_to_force=motor.get("volts_to_force", 1.73),
        )
    else:
        plant = pendulum_cart(params)
    return plant, params


def build_baseline(cfg: dict) -> PendulumBaseline:
    plant, _ = build_plant(cfg)
    controller = StateFeedbackController(np.asarray(cfg["controller_gain"], dtype=float))
    return PendulumBaseline(
        plant,
        controller,
        dt_sim=cfg["rates"]["dt_sim"],
        dt_module=cfg["rates"]["dt_module"],
        divergence_bound=cfg["divergence_bound"],
    )


def build_surrogate(cfg: dict):
    s = cfg["surrogate"]
    return nmp_surrogate_axis(
        s["zero"], s["delay_steps"], dt=s["dt"], closed_loop_poles=s.get("poles")
    )


def build_training_config(cfg: dict, seed=None) -> TrainingConfig:
    t = cfg["training"]
    return TrainingConfig(
        optimizer=t["optimizer"],
        learning_rate=t["learning_rate"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        seed=cfg["seed"] if seed is None else seed,
        validation_fraction=t["validation_fraction"],
        patience=t["patience"],
        lr_schedule=t.get("lr_schedule", "constant"),
    )


def tones_trajectory(tones, duration, name="tones") -> Trajectory:
    """Sum of sinusoids given as (amplitude, period, phase) triples."""

    def fn(t):
        t = np.asarray(t, dtype=float)
        return sum(a * np.sin(2 * np.pi * t / p + ph) for a, p, ph in tones)

    return Trajectory(name, fn, duration)
