import json
import os

import pytest

from dtecm.characterization import CharacterizationConfig
from dtecm.config import (
    DEFAULTS_PATH,
    characterization_config,
    generator_config,
    load_config,
    loss_model,
    synthesis_config,
)
from dtecm.foliage import FoliageLossModel
from dtecm.stochastic import GeneratorConfig


def test_defaults_loaded():
    config = load_config()
    assert config["knn"]["n_neighbors"] == 22
    assert config["link"]["outage_loss_db"] == 160.0
    assert config["preset"] == "characterization"


def test_default_paths_are_absolute():
    paths = load_config()["paths"]
    template_dir = os.path.dirname(DEFAULTS_PATH)
    assert paths["template"] == os.path.join(template_dir, "table.html.j2")
    assert os.path.isfile(paths["state_params"])


def test_kwargs_merged_with_defaults():
    config = load_config(link={"n_drops": 100})
    assert config["link"]["n_drops"] == 100
    # untouched keys of the same section keep their default
    assert config["link"]["pt_dbm"] == 13.0
    assert config["knn"]["n_neighbors"] == 22


def test_both_path_and_kwargs():
    with pytest.raises(ValueError):
        # only one source of configuration is accepted
        load_config("config.json", link={"n_drops": 100})


def test_missing_config_file():
    with pytest.raises(FileNotFoundError):
        load_config("config_that_does_not_exist.json")


def test_config_file_paths_relative_to_file(tmp_path):
    path = os.path.join(tmp_path, "config.json")
    with open(path, "w") as f:
        json.dump({"paths": {"report_dir": "out"}, "twin": {"resolution_deg": 0.5}}, f)
    config = load_config(path)
    assert config["paths"]["report_dir"] == os.path.join(str(tmp_path), "out")
    # defaults of the same section survive
    assert config["paths"]["template"].endswith("table.html.j2")
    assert config["twin"]["resolution_deg"] == 0.5
    assert config["twin"]["pose_grid_step_deg"] == 2.0


def test_section_replaced_by_value():
    with pytest.raises(TypeError, match="'link'"):
        load_config(link=5)


def test_paths_not_an_object():
    with pytest.raises(TypeError, match="'paths'"):
        load_config(paths="reports")


def test_typed_sections_match_defaults():
    config = load_config()
    assert loss_model(config) == FoliageLossModel()
    assert generator_config(config) == GeneratorConfig()
    assert characterization_config(config) == CharacterizationConfig()
    assert synthesis_config(config).stochastic
    assert not synthesis_config(config, stochastic=False).stochastic


def test_typed_section_override():
    config = load_config(foliage_loss={"r_th": 0.4}, characterization={"min_pts": 5})
    assert loss_model(config).r_th == 0.4
    assert loss_model(config).slope == -30.0
    assert characterization_config(config).min_pts == 5
