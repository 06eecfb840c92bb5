import io
import json
import urllib.error

import numpy as np
import pytest

from mohsm.dataio import (DataFormatError, ExperimentConfig, FetchError, apply_masks, fetch_series, load_csv,
                          random_split, save_csv)
from mohsm.gp import Dataset
from mohsm.synth import ConfigError, SynthConfig, generate


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_long_form(tmp_path):
    d = load_csv(write(tmp_path, "channel,x,y\na,0.0,1.5\nb,0.5,-2\na,1.0,3\n"))
    assert d.channel_names == ["a", "b"]
    np.testing.assert_array_equal(d.channel, [0, 1, 0])
    np.testing.assert_array_equal(d.x[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(d.y, [1.5, -2.0, 3.0])


def test_long_form_multidim(tmp_path):
    d = load_csv(write(tmp_path, "channel,x0,x1,y\na,0,1,2\na,3,4,5\n"))
    assert d.input_dim == 2
    np.testing.assert_array_equal(d.x, [[0, 1], [3, 4]])


def test_wide_form_missing_cell(tmp_path):
    d = load_csv(write(tmp_path, "x,gold,oil\n0,1.0,2.0\n1,,4.0\n2,5.0,6.0\n"))
    assert d.channel_names == ["gold", "oil"]
    assert len(d) == 5
    pairs = set(zip(d.channel.tolist(), d.x[:, 0].tolist()))
    assert (0, 1.0) not in pairs and (1, 1.0) in pairs
    np.testing.assert_array_equal(d.y, [1, 2, 4, 5, 6])


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.integers(0, 3, 40), rng.normal(size=40), rng.normal(size=40), ["p", "q", "r"])
    d = d.subset(np.flatnonzero(np.isin(d.channel, [0, 1, 2])))
    back = load_csv(save_csv(d, tmp_path / "out" / "d.csv"), channels=d.channel_names)
    np.testing.assert_array_equal(back.channel, d.channel)
    np.testing.assert_allclose(back.x, d.x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.y, d.y, rtol=0, atol=1e-12)


@pytest.mark.parametrize("text,line", [
    ("channel,x,y\na,0,1\na,zz,1\n", 3),
    ("channel,x,y\na,0,1\n\na,0\n", 4),
    ("x,a\n0,1\n1,nan\n", 3),
    ("x,a,a\n0,1,2\n", 1),
])
def test_malformed_reports_line(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        load_csv(write(tmp_path, text))
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_unknown_channel(tmp_path):
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path, "channel,x,y\na,0,1\nz,1,1\n"), channels=["a"])
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path, "x,a,z\n0,1,1\n"), channels=["a"])


def test_empty_file(tmp_path):
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path, ""))


def test_masks_partition():
    rng = np.random.default_rng(1)
    d = Dataset(np.arange(30) % 2, rng.uniform(0, 10, 30), rng.normal(size=30), ["a", "b"])
    pool, held = apply_masks(d, {})
    assert len(held) == 0 and len(pool) == 30
    pool, held = apply_masks(d, {"a": [(0.0, 10.0)]})
    assert not np.any(pool.channel == 0)
    pool, held = apply_masks(d, {1: [(2.0, 5.0)], "a": [(7.0, 8.0)]})
    assert len(pool) + len(held) == 30
    both = np.sort(np.r_[pool.y, held.y])
    np.testing.assert_array_equal(both, np.sort(d.y))


def test_mask_counts_on_synthetic():
    res = generate(SynthConfig(n_points=100))
    full = res.train.concat(res.test)
    _, held = apply_masks(full, {"delayed": [(-5.0, 5.0)]})
    sel = (full.channel == 2) & (full.x[:, 0] >= -5) & (full.x[:, 0] <= 5)
    assert len(held) == int(sel.sum())


def test_random_split():
    d = Dataset(np.zeros(10, dtype=int), np.arange(10.0), np.arange(10.0), ["a"])
    tr, te = random_split(d, 0.8, 3)
    assert len(tr) == 8 and len(te) == 2
    assert set(tr.x[:, 0]) | set(te.x[:, 0]) == set(range(10))
    tr2, _ = random_split(d, 0.8, 3)
    np.testing.assert_array_equal(tr.x, tr2.x)
    assert len(random_split(d, 1.0, 0)[1]) == 0


def test_experiment_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"data": "d.csv", "method": "mosm", "optimizer": {"max_iters": 5},
                             "masks": {"a": [[0, 1]]}}))
    cfg = ExperimentConfig.load(p)
    assert cfg.data_path == tmp_path / "d.csv"
    assert cfg.optimizer.max_iters == 5 and cfg.optimizer.lr == 0.02
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("d,field_name", [
    ({"data": "x", "bogus": 1}, "bogus"),
    ({"method": "mohsm"}, "data"),
    ({"data": "x", "method": "gpr"}, "method"),
    ({"data": "x", "P": 0}, "P"),
    ({"data": "x", "masks": {"a": [[2, 1]]}}, "masks.a"),
    ({"data": "x", "optimizer": {"momentum": 1}}, "optimizer.momentum"),
    ({"data": "x", "channels": ["b"], "masks": {"a": [[0, 1]]}}, "masks.a"),
])
def test_experiment_config_errors(d, field_name):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(d)
    assert info.value.field == field_name


def test_fetch_writes_and_caches(tmp_path):
    calls = []

    def transport(url):
        calls.append(url)
        return b"x,a\n0,1\n"

    p = fetch_series("https://example.org/data/series.csv", cache_dir=tmp_path, transport=transport)
    assert p.read_bytes() == b"x,a\n0,1\n"
    assert p.name.endswith("-series.csv")

    def offline(url):
        raise AssertionError("network used on cache hit")

    assert fetch_series("https://example.org/data/series.csv", cache_dir=tmp_path, transport=offline) == p
    assert len(calls) == 1


def test_fetch_retries_then_fails(tmp_path):
    calls = []

    def transport(url):
        calls.append(url)
        raise urllib.error.HTTPError(url, 404, "Not Found", {}, io.BytesIO())

    with pytest.raises(FetchError) as info:
        fetch_series("https://example.org/missing.csv", cache_dir=tmp_path, transport=transport, backoff=0.0)
    assert info.value.attempts == 3
    assert len(calls) == 3
    assert not list(tmp_path.iterdir())
