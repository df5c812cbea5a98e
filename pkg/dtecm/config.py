"""
Layered run configuration.

The bundled ``templates/defaults.json`` is read first and a user file, or
keyword overrides, is merged on top of it. Entries of the ``paths`` section
are made absolute relative to the file that declared them.
"""

import copy
import json
import os

from .characterization import CharacterizationConfig
from .foliage import FoliageLossModel
from .stochastic import GeneratorConfig
from .synthesis import SynthesisConfig

DEFAULTS_PATH = os.path.join(os.path.dirname(__file__), "templates", "defaults.json")


def _set_defaults(default_layer, user_layer, section=None):
    """
    Fill every key missing from ``user_layer`` with its default

    Nested sections are merged recursively.

    Raises:
        TypeError: when the user replaces a section with a non-object
    """
    for key, value in default_layer.items():
        user_layer.setdefault(key, copy.deepcopy(value))
        if isinstance(value, dict):
            name = key if section is None else f"{section}.{key}"
            if not isinstance(user_layer[key], dict):
                raise TypeError(f"configuration section '{name}' must be an object")
            _set_defaults(value, user_layer[key], name)
    return user_layer


def _expand_paths(paths, base_path):
    """Return ``paths`` with relative entries joined onto ``base_path``"""
    expanded = {}
    for key, value in paths.items():
        if value in ("", None):
            expanded[key] = value
        elif isinstance(value, list):
            expanded[key] = [os.path.abspath(os.path.join(base_path, p)) for p in value]
        else:
            expanded[key] = os.path.abspath(os.path.join(base_path, value))
    return expanded


def load_config(config_path=None, **kwargs):
    """
    Load the run configuration

    Parameters:
        config_path (:obj:`str` | :obj:`None`):
            path to a JSON configuration, or :obj:`None` when using kwargs
        kwargs: any section of the configuration, e.g.
            ``link={"n_drops": 100}``

    Returns:
        :obj:`dict`: the configuration with every default filled in

    Raises:
        ValueError: When both :obj:`config_path` and :obj:`kwargs` defined
        FileNotFoundError: When :obj:`config_path` does not exist
    """
    if config_path is not None and len(kwargs) > 0:
        raise ValueError("cannot have both config path and kwargs")

    with open(DEFAULTS_PATH, "r", encoding="utf-8") as f:
        defaults = json.load(f)
    defaults["paths"] = _expand_paths(defaults["paths"], os.path.dirname(DEFAULTS_PATH))

    if config_path is None:
        user = copy.deepcopy(kwargs)
        base = os.getcwd()
    else:
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"config '{config_path}' does not exist")
        with open(config_path, "r", encoding="utf-8") as f:
            user = json.load(f)
        base = os.path.dirname(os.path.abspath(config_path))

    if "paths" in user:
        if not isinstance(user["paths"], dict):
            raise TypeError("configuration section 'paths' must be an object")
        user["paths"] = _expand_paths(user["paths"], base)
    return _set_defaults(defaults, user)


def loss_model(config):
    return FoliageLossModel(**{k: float(v) for k, v in config["foliage_loss"].items()})


def generator_config(config):
    section = config["generator"]
    return GeneratorConfig(
        delay_scaling=float(section["delay_scaling"]),
        cluster_shadowing_db=float(section["cluster_shadowing_db"]),
        departure_spread_ratio=float(section["departure_spread_ratio"]),
        calibration_iterations=int(section["calibration_iterations"]),
    )


def synthesis_config(config, stochastic=None):
    section = config["synthesis"]
    return SynthesisConfig(
        stochastic=bool(section["stochastic"] if stochastic is None else stochastic),
        chi=bool(section["chi"]),
        generator=generator_config(config),
    )


def characterization_config(config):
    section = config["characterization"]
    return CharacterizationConfig(
        dynamic_range_db=float(section["dynamic_range_db"]),
        noise_floor_db=float(section["noise_floor_db"]),
        threshold=bool(section["threshold"]),
        eps=float(section["eps"]),
        min_pts=int(section["min_pts"]),
        zeta=float(section["zeta"]),
        include_aod=bool(section["include_aod"]),
    )
