import numpy as np
import pytest

from jointfuse import io
from jointfuse.io import ConfigError, DataError


def test_config_get_and_missing_key():
    cfg = io.default_config()
    assert io.get(cfg, "mesh.max_edge_inner") == 8.0
    assert io.get(cfg, "inference.strategy") == "ccd"
    with pytest.raises(ConfigError, match="mesh.max_edgy"):
        io.get(cfg, "mesh.max_edgy")
    with pytest.raises(ConfigError, match="'seed.x'"):
        io.get(cfg, "seed.x")


def test_default_config_is_a_copy():
    a = io.default_config()
    a["mesh"]["cutoff"] = 99
    assert io.default_config()["mesh"]["cutoff"] == 1.0


def test_set_key_creates_path():
    cfg = {}
    io.set_key(cfg, "a.b.c", 3)
    assert io.get(cfg, "a.b.c") == 3


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "list.json")
    io.dump_json({"seed": 4}, tmp_path / "ok.json")
    assert io.load_config(tmp_path / "ok.json") == {"seed": 4}


def test_observations_round_trip(tmp_path, small):
    _, _, sim = small
    mon = sim.monitors.with_values(np.where(np.arange(len(sim.monitors)) == 3, np.nan,
                                            sim.monitors.values))
    p = tmp_path / "obs.csv"
    io.write_observations(p, [sim.pcm, sim.aqum, mon])
    back = io.read_observations(p)
    assert set(back) == {"pcm", "aqum", "monitors"}
    for name, orig in (("pcm", sim.pcm), ("aqum", sim.aqum), ("monitors", mon)):
        b = back[name]
        assert np.array_equal(b.x, orig.x) and np.array_equal(b.y, orig.y)
        assert np.array_equal(b.time, orig.time)
        assert np.array_equal(b.values, orig.values, equal_nan=True)
    assert back["pcm"].temporal_resolution == "annual"
    assert np.array_equal(back["monitors"].sitetype, mon.sitetype)
    assert np.array_equal(back["monitors"].monitor_id, mon.monitor_id)


def test_observation_errors(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("source,monitor_id\n")
    with pytest.raises(DataError, match="lacks columns"):
        io.read_observations(p)
    head = ",".join(io.OBS_COLUMNS)
    p.write_text(head + "\nsatellite,A,,1,1,0,0.5\n")
    with pytest.raises(DataError, match="unknown source"):
        io.read_observations(p)
    p.write_text(head + "\npcm,P1,,1,1,0,0.5\n")
    with pytest.raises(DataError, match="no monitor rows"):
        io.read_observations(p)
    p.write_text(head + "\nmonitors,M1,URB,1,abc,0,0.5\n")
    with pytest.raises(DataError, match="malformed"):
        io.read_observations(p)
    with pytest.raises(DataError):
        io.read_observations(tmp_path / "missing.csv")


def test_npz_bytes_are_deterministic(tmp_path):
    arrs = {"a": np.arange(5.0), "b": np.array(["x", "yy"])}
    io.write_npz(tmp_path / "1.npz", arrs)
    io.write_npz(tmp_path / "2.npz", arrs)
    assert (tmp_path / "1.npz").read_bytes() == (tmp_path / "2.npz").read_bytes()
    with np.load(tmp_path / "1.npz") as z:
        assert np.array_equal(z["a"], arrs["a"]) and list(z["b"]) == ["x", "yy"]
