import json

import pytest

from npmarket.config import ConfigError, ExperimentConfig, config_from_dict, load_config


def test_defaults_are_valid():
    cfg = ExperimentConfig().validate()
    assert cfg.consensus == ["raft", "ibft"] and cfg.seed is None
    assert cfg.topology.sites == ["cloud_a"] * 4 + ["remote"]


def test_shipped_default_config_matches_builtin(tmp_path):
    import pathlib

    cfg = load_config(str(pathlib.Path(__file__).parent.parent / "configs" / "default.json"))
    builtin = ExperimentConfig()
    assert cfg.seed == 42
    for attr in ("consensus", "itrs", "rounds", "workload", "cost", "raft", "ibft", "block_gas_limit_ms"):
        assert getattr(cfg, attr) == getattr(builtin, attr), attr
    assert cfg.topology.sites == builtin.topology.sites


def test_single_consensus_string():
    assert config_from_dict({"consensus": "ibft"}).consensus == ["ibft"]


@pytest.mark.parametrize("doc", [
    {"consensus": "pow"},
    {"itrs": []},
    {"itrs": [0]},
    {"rounds": ["transfer"]},
    {"seed": -1},
    {"seed": 2 ** 64},
    {"workload": {"mix": {"requestResources": 0.4}}},
    {"workload": {"bogus": 1}},
    {"topology": {"loss_rate": 1.5}},
    {"topology": {"intra_site": {"mean_ms": 1, "stddev_ms": 0, "min_ms": 5}}},
    {"raft": {"heartbeat_ms": 500}},
    {"ibft": {"round_timeout_ms": 0}},
    {"cost_model": {"c_scan_ms": -1}},
    {"unknown": True},
])
def test_bad_configs_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_topology_reference_file(tmp_path):
    (tmp_path / "topo.json").write_text(json.dumps({"sites": ["a", "a", "b"], "loss_rate": 0.1}))
    (tmp_path / "exp.json").write_text(json.dumps({"topology": "topo.json"}))
    cfg = load_config(str(tmp_path / "exp.json"))
    assert cfg.topology.n == 3 and cfg.topology.loss_rate == 0.1


def test_missing_files_are_named(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(str(tmp_path / "nope.json"))
    (tmp_path / "exp.json").write_text(json.dumps({"topology": "gone.json"}))
    with pytest.raises(ConfigError, match="gone.json"):
        load_config(str(tmp_path / "exp.json"))


def test_malformed_json(tmp_path):
    (tmp_path / "exp.json").write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(tmp_path / "exp.json"))
