"""Run configuration: flat key/value files with sections, validated against a
fixed schema so a typo fails before any training happens.

Every key, its type and default is in SCHEMA; the README documents the same
set.  ``gamma = env`` defers to the environment's own discount.
"""

import configparser
from dataclasses import dataclass, field, asdict

from .envs import ENV_KEYS, make_env

VARIANTS = ("sica", "ica", "sica-zero", "sica-one")


class ConfigError(ValueError):
    pass


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "env": (str, "climb"),
        "n_agents": (int, 0),            # 0 = environment default
        "mixer": (str, "qmix"),
        "variant": (str, "sica"),
        "seed": (int, 0),
        "total_steps": (int, 5000),
    },
    "model": {
        "window": (int, 4),
        "state_dim": (int, 32),
        "hidden": (int, 64),
        "mix_hidden": (int, 32),
        "weight_transform": (str, "abs"),
        "exclude_self_from_softmax": (_bool, False),
        "detach_align_target": (_bool, True),
        "q_bias_init": (float, 0.0),
    },
    "train": {
        "lr": (float, 5e-4),
        "gamma": (str, "env"),
        "batch_size": (int, 32),
        "buffer_capacity": (int, 5000),
        "eps_start": (float, 1.0),
        "eps_final": (float, 0.05),
        "eps_anneal_frac": (float, 0.1),
        "target_period": (int, 200),
        "grad_clip": (float, 10.0),
    },
    "schedule": {
        "t_max_frac": (float, 0.8),
        "peer_decay_frac": (float, 0.2),
        "sigma_threshold_frac": (float, 0.5),
        "beta1": (float, 0.1),
        "beta2": (float, 1.0),
    },
    "eval": {
        "eval_interval": (int, 500),
        "eval_episodes": (int, 10),
    },
}


@dataclass
class RunConfig:
    """Fully resolved configuration; serialized into the run manifest."""

    env: str = "climb"
    n_agents: int = 0
    mixer: str = "qmix"
    variant: str = "sica"
    seed: int = 0
    total_steps: int = 5000
    window: int = 4
    state_dim: int = 32
    hidden: int = 64
    mix_hidden: int = 32
    weight_transform: str = "abs"
    exclude_self_from_softmax: bool = False
    detach_align_target: bool = True
    q_bias_init: float = 0.0
    lr: float = 5e-4
    gamma: str = "env"
    batch_size: int = 32
    buffer_capacity: int = 5000
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_anneal_frac: float = 0.1
    target_period: int = 200
    grad_clip: float = 10.0
    t_max_frac: float = 0.8
    peer_decay_frac: float = 0.2
    sigma_threshold_frac: float = 0.5
    beta1: float = 0.1
    beta2: float = 1.0
    eval_interval: int = 500
    eval_episodes: int = 10

    def validate(self):
        if self.env not in ENV_KEYS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {ENV_KEYS}")
        if self.mixer not in ("qmix", "vdn"):
            raise ConfigError(f"unknown mixer {self.mixer!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.weight_transform not in ("abs", "softplus"):
            raise ConfigError(f"unknown weight_transform {self.weight_transform!r}")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")
        if self.beta2 <= self.beta1:
            raise ConfigError("beta2 must exceed beta1")
        if not 0.0 <= self.eps_final <= self.eps_start <= 1.0:
            raise ConfigError("need 0 <= eps_final <= eps_start <= 1")
        if self.gamma != "env":
            g = float(self.gamma)
            if not 0.0 < g <= 1.0:
                raise ConfigError("gamma must lie in (0, 1] or be 'env'")
        return self

    # derived step counts ---------------------------------------------------

    @property
    def t_max(self):
        return max(1, int(round(self.t_max_frac * self.total_steps)))

    @property
    def peer_decay_steps(self):
        return max(1, int(round(self.peer_decay_frac * self.total_steps)))

    @property
    def sigma_threshold(self):
        return int(round(self.sigma_threshold_frac * self.total_steps))

    @property
    def eps_anneal_steps(self):
        return max(1, int(round(self.eps_anneal_frac * self.total_steps)))

    def build_env(self):
        return make_env(self.env, n_agents=self.n_agents or None)

    def resolved_gamma(self, env_spec):
        return env_spec.gamma if self.gamma == "env" else float(self.gamma)

    def to_dict(self):
        return asdict(self)


_FIELD_SECTION = {key: sec for sec, keys in SCHEMA.items() for key in keys}


def _apply(cfg_dict, section, key, raw):
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {key!r} in section [{section}]")
    parser, _ = SCHEMA[section][key]
    try:
        cfg_dict[key] = parser(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc


def load_config(path=None, overrides=()):
    """Build a validated RunConfig from an INI file plus `section.key=value`
    (or bare `key=value`) override strings."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(values, section, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
        else:
            if key not in _FIELD_SECTION:
                raise ConfigError(f"unknown config key {key!r}")
            section = _FIELD_SECTION[key]
        _apply(values, section, key, raw.strip())
    return RunConfig(**values).validate()
