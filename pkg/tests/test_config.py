import json

import pytest

from boolcd import config
from boolcd.exceptions import ConfigError


def test_defaults_are_copies():
    a = config.defaults()
    a["descent"]["policy"] = "markovian"
    assert config.defaults()["descent"]["policy"] == "greedy"


def test_ini_types(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[descent]\nmax_epochs = 10\nepsilon = 0.5\nstop_on_local_min = no\n"
                 "[sweep]\nsizes = 8,16,32\n[run]\nseed = 4\n")
    cfg = config.load(p)
    assert cfg["descent"]["max_epochs"] == 10 and cfg["descent"]["epsilon"] == 0.5
    assert cfg["descent"]["stop_on_local_min"] is False
    assert config.int_list(cfg["sweep"]["sizes"], "sizes") == [8, 16, 32]
    assert config.resolve_seed(cfg) == 4


def test_manifest_as_config(tmp_path):
    cfg = config.defaults()
    cfg["reservoir"]["n_nodes"] = 33
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"command": "train", "config": cfg}))
    assert config.load(p)["reservoir"]["n_nodes"] == 33


@pytest.mark.parametrize("text", ["[nope]\na = 1\n", "[descent]\nnope = 1\n",
                                  "[descent]\nstop_on_local_min = maybe\n", "not an ini"])
def test_invalid(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        config.load(p)


def test_override_and_seed_precedence(monkeypatch):
    cfg = config.defaults()
    config.override(cfg, "descent", "max_epochs", "12")
    config.override(cfg, "descent", "policy", None)
    assert cfg["descent"]["max_epochs"] == 12 and cfg["descent"]["policy"] == "greedy"
    with pytest.raises(ConfigError):
        config.override(cfg, "descent", "colour", 1)
    monkeypatch.delenv(config.SEED_ENV, raising=False)
    assert config.resolve_seed(config.defaults()) == 0
    monkeypatch.setenv(config.SEED_ENV, "21")
    assert config.resolve_seed(config.defaults()) == 21
    assert config.resolve_seed(config.defaults(), 5) == 5
    with pytest.raises(ConfigError):
        config.resolve_seed(config.defaults(), -1)


def test_inline_comments(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[theory]\nkappa_mode = uniform_only ; exact_vertex | uniform_only\n")
    assert config.load(p)["theory"]["kappa_mode"] == "uniform_only"
