import json

import pytest

from taxelsim.config import load_config, parse_config
from taxelsim.errors import ConfigurationError

from conftest import tiny_config


@pytest.mark.parametrize("name", ["demo.json", "paperish.json"])
def test_shipped_configs_load(name):
    cfg = load_config(name)
    assert cfg.seed >= 0
    assert len(cfg.taxel_positions) == 8


def test_seed_override():
    assert parse_config(tiny_config(), seed=7).seed == 7
    assert parse_config(tiny_config()).seed == 3


@pytest.mark.parametrize("mutate, match", [
    (lambda c: c.update(bogus={}), "unknown config sections"),
    (lambda c: c.pop("scenarios"), "scenarios"),
    (lambda c: c.update(seed=-1), "seed"),
    (lambda c: c["mesh"].update(resolution=[8, 5]), "mesh"),
    (lambda c: c["scenarios"]["trajectories"][0].update(depth_max=0.009), "half the block height"),
    (lambda c: c["scenarios"]["indenters"].append({"shape": "blob", "dims": {}}), "indenter 2"),
    (lambda c: c.update(train={"epochs": 3}), "unknown keys"),
    (lambda c: c.update(eval={"test_fraction": 1.5}), "test_fraction"),
])
def test_invalid_configs_name_the_problem(mutate, match):
    raw = tiny_config()
    mutate(raw)
    with pytest.raises(ConfigurationError, match=match):
        parse_config(raw)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_classify_section_validated():
    raw = tiny_config(classify={"indenters": {"a": {"shape": "sphere", "dims": {"radius": 0.004}}}})
    with pytest.raises(ConfigurationError, match="two indenter classes"):
        parse_config(raw)
    raw = json.loads(json.dumps(tiny_config()))
    assert parse_config(raw).classify is None
