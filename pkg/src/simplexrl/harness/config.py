"""INI experiment configs with strict key checking.

Every key is typed and every section has a closed vocabulary; an unknown
section or key is a hard error so typos cannot silently fall back to
defaults.
"""

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .. import rl
from ..tasks import make_task

PLANTS = ("pendulum", "rover", "pancreas")


class ConfigError(ValueError):
    """Unusable experiment config; reported with exit code 2."""


@dataclass
class PlantSection:
    field_seed: int = 0            # rover obstacle layout
    rsc_lookahead: int = 10        # pendulum / pancreas reverse-switch horizon


@dataclass
class TrainingSection:
    gamma: float = 0.99
    batch_size: int = 64
    max_steps: int = 200_000
    max_trajectory_len: int = 500
    tau: float = 0.005
    srl_strategy: str = rl.PUA
    r_unrecov: float = None        # default: the plant's own value
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 1_000
    rejection_cap: int = 10_000
    noise_sigma: np.ndarray = None  # default: the plant's own value
    actor_hidden: tuple = None
    critic_hidden: tuple = None
    curve_every: int = 1_000


@dataclass
class NsaSection:
    n_trajectories: int = 100
    max_trajectory_len: int = 500
    retrain: bool = True
    checkpoint: str = None         # starting nets; fresh when omitted
    replay: str = None             # seed the adaptation pool from this file
    save_records: bool = False


@dataclass
class EvalSection:
    n_trajectories: int = 100
    horizon: int = 500
    checkpoint: str = None
    compare_to: str = None


@dataclass
class ExtendSection:
    checkpoint: str = None
    replay: str = None             # continue training from this pool
    extra_updates: int = 0


@dataclass
class ExperimentConfig:
    plant: str
    name: str
    plant_section: PlantSection = field(default_factory=PlantSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    nsa: NsaSection = field(default_factory=NsaSection)
    eval: EvalSection = field(default_factory=EvalSection)
    extend: ExtendSection = field(default_factory=ExtendSection)


def _parse_scalar(raw, kind, where):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw.strip()
        if kind == "floats":
            return np.array([float(x) for x in raw.split(",")])
        if kind == "ints":
            return tuple(int(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(kind)


# section -> key -> (attribute kind)
_SCHEMA = {
    "experiment": {"plant": "str", "name": "str"},
    "plant": {"field_seed": "int", "rsc_lookahead": "int"},
    "training": {
        "gamma": "float", "batch_size": "int", "max_steps": "int",
        "max_trajectory_len": "int", "tau": "float", "srl_strategy": "str",
        "r_unrecov": "float", "lr_actor": "float", "lr_critic": "float",
        "buffer_capacity": "int", "warmup_steps": "int", "rejection_cap": "int",
        "noise_sigma": "floats", "actor_hidden": "ints", "critic_hidden": "ints",
        "curve_every": "int",
    },
    "nsa": {"n_trajectories": "int", "max_trajectory_len": "int",
            "retrain": "bool", "checkpoint": "str", "replay": "str",
            "save_records": "bool"},
    "eval": {"n_trajectories": "int", "horizon": "int", "checkpoint": "str",
             "compare_to": "str"},
    "extend": {"checkpoint": "str", "replay": "str", "extra_updates": "int"},
}

_PLANT_KEYS = {  # which [plant] keys each plant accepts
    "pendulum": {"rsc_lookahead"},
    "rover": {"field_seed"},
    "pancreas": {"rsc_lookahead"},
}


def load_config(path) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    if not cp.has_option("experiment", "plant"):
        raise ConfigError(f"{path}: [experiment] plant is required")
    plant = cp.get("experiment", "plant").strip()
    if plant not in PLANTS:
        raise ConfigError(f"{path}: unknown plant {plant!r}, expected one of {PLANTS}")

    if cp.has_section("plant"):
        bad = set(cp["plant"]) - _PLANT_KEYS[plant]
        if bad:
            raise ConfigError(f"{path}: [plant] keys {sorted(bad)} do not apply to {plant}")

    cfg = ExperimentConfig(plant=plant,
                           name=cp.get("experiment", "name", fallback=plant).strip())

    targets = {"plant": cfg.plant_section, "training": cfg.training,
               "nsa": cfg.nsa, "eval": cfg.eval, "extend": cfg.extend}
    for section, obj in targets.items():
        if not cp.has_section(section):
            continue
        for key, raw in cp[section].items():
            setattr(obj, key, _parse_scalar(raw, _SCHEMA[section][key],
                                            f"{path} [{section}] {key}"))

    t = cfg.training
    if t.srl_strategy not in (rl.PUA, rl.BC_FILTER, rl.RND_FILTER):
        raise ConfigError(f"{path}: srl_strategy must be one of "
                          f"{(rl.PUA, rl.BC_FILTER, rl.RND_FILTER)}")
    for name, v in (("gamma", t.gamma), ("tau", t.tau)):
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"{path}: {name} must lie in [0, 1]")
    for name, v in (("batch_size", t.batch_size), ("max_steps", t.max_steps),
                    ("max_trajectory_len", t.max_trajectory_len),
                    ("buffer_capacity", t.buffer_capacity),
                    ("curve_every", t.curve_every),
                    ("rejection_cap", t.rejection_cap)):
        if v <= 0:
            raise ConfigError(f"{path}: {name} must be positive")
    if max(t.warmup_steps, t.batch_size) > t.buffer_capacity:
        raise ConfigError(f"{path}: buffer capacity below the update threshold")
    if cfg.nsa.n_trajectories < 0 or cfg.eval.n_trajectories < 0:
        raise ConfigError(f"{path}: trajectory counts cannot be negative")
    return cfg


def make_bundle(cfg: ExperimentConfig):
    if cfg.plant == "rover":
        return make_task("rover", field_seed=cfg.plant_section.field_seed)
    return make_task(cfg.plant, rsc_lookahead=cfg.plant_section.rsc_lookahead)


def training_config(cfg: ExperimentConfig, bundle) -> rl.TrainingConfig:
    """Materialize the learner config, filling plant-specific defaults."""
    t = cfg.training
    sigma = t.noise_sigma if t.noise_sigma is not None else bundle.default_noise_sigma
    if sigma is not None and len(sigma) == 1 and bundle.action_dim > 1:
        sigma = np.full(bundle.action_dim, float(sigma[0]))
    if sigma is not None and len(sigma) != bundle.action_dim:
        raise ConfigError(f"noise_sigma needs 1 or {bundle.action_dim} entries")
    try:
        return rl.TrainingConfig(
            gamma=t.gamma, batch_size=t.batch_size, max_steps=t.max_steps,
            max_trajectory_len=t.max_trajectory_len, tau=t.tau,
            noise=rl.NoiseSpec("gaussian", sigma) if sigma is not None else rl.NoiseSpec("none"),
            srl_strategy=t.srl_strategy,
            r_unrecov=t.r_unrecov if t.r_unrecov is not None else bundle.r_unrecov,
            lr_actor=t.lr_actor, lr_critic=t.lr_critic,
            buffer_capacity=t.buffer_capacity, warmup_steps=t.warmup_steps,
            rejection_cap=t.rejection_cap)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def hidden_layers(cfg: ExperimentConfig, bundle):
    t = cfg.training
    return (t.actor_hidden if t.actor_hidden is not None else bundle.actor_hidden,
            t.critic_hidden if t.critic_hidden is not None else bundle.critic_hidden)
