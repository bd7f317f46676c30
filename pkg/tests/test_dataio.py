from __future__ import annotations

import math

import numpy as np
import pytest

from ddrj.dataio import (
    fmt,
    load_config,
    parse_config,
    read_dataset,
    read_table,
    read_trace,
    write_dataset,
    write_json_atomic,
    write_trace,
)
from ddrj.errors import ConfigError, ParseError, SchemaMismatch
from ddrj.model import Dataset
from ddrj.sampler import Sample


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestReadTable:
    def test_basic(self, tmp_path):
        p = write(tmp_path, "y,roi_a,snp_b,roi_c\n1,0.5,-1,2\n0,1.5,0,3\n")
        y, x, z, rn, sn = read_table(p)
        np.testing.assert_array_equal(y, [1, 0])
        np.testing.assert_array_equal(x, [[0.5, 2], [1.5, 3]])
        np.testing.assert_array_equal(z, [[-1], [0]])
        assert rn == ["roi_a", "roi_c"] and sn == ["snp_b"]

    @pytest.mark.parametrize("text,line,col", [
        ("y,roi_a\n1,0.5\n0,abc\n", 3, 2),
        ("y,roi_a\n2,0.5\n0,1\n", 2, 1),
        ("y,snp_a\n1,1\n0,2\n", 3, 2),
        ("y,roi_a\n1,0.5\n0\n", 3, 2),
        ("y,roi_a\n1,nan\n0,1\n", 2, 2),
    ])
    def test_parse_errors_locate_cell(self, tmp_path, text, line, col):
        with pytest.raises(ParseError) as e:
            read_table(write(tmp_path, text))
        assert (e.value.line, e.value.column) == (line, col)

    @pytest.mark.parametrize("text", ["roi_a,y\n0.5,1\n", "y,age\n1,3\n", "y,roi_a,roi_a\n1,1,1\n"])
    def test_schema_errors(self, tmp_path, text):
        with pytest.raises(SchemaMismatch):
            read_table(write(tmp_path, text))

    def test_optional_outcome(self, tmp_path):
        y, x, _, _, _ = read_table(write(tmp_path, "roi_a\n1.0\n2.0\n"), require_y=False)
        assert y is None and x.shape == (2, 1)

    def test_dataset_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        d = Dataset.from_arrays(rng.integers(0, 2, 8), rng.normal(size=(8, 2)) * 1e3,
                                rng.choice([-1, 0, 1], (8, 3)))
        p = tmp_path / "d.csv"
        write_dataset(p, d)
        back = read_dataset(p)
        np.testing.assert_array_equal(back.x_raw, d.x_raw)
        np.testing.assert_array_equal(back.z, d.z)
        np.testing.assert_array_equal(back.y, d.y)


class TestConfig:
    def test_defaults(self):
        cfg, hyper = parse_config(None)
        assert (cfg.iterations, cfg.burn_in, cfg.thin) == (35000, 5000, 10)
        assert (hyper.var_beta, hyper.var_alpha, hyper.var_delta) == (25.0, 25.0, 25.0)

    def test_values(self, tmp_path):
        p = write(tmp_path, "iterations: 100\nburn_in: 10\nmode: rj\nvar_beta: 100\npreselect_threshold: 0.1\n"
                            "chains: 2\n", "c.yaml")
        cfg, hyper = load_config(p)
        assert cfg.mode == "rj" and cfg.pre_selection_threshold == 0.1 and hyper.var_beta == 100.0
        assert cfg.chains == 2 and cfg.jitter_init

    @pytest.mark.parametrize("d", [{"iteration": 5}, {"iterations": 2.5}, {"thin": "x"}, {"mode": "fast"},
                                   {"var_beta": -1}, {"burn_in": 50000}])
    def test_invalid(self, d):
        with pytest.raises(ConfigError):
            parse_config(d)

    def test_non_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "- 1\n- 2\n", "c.yaml"))


class TestTrace:
    def test_round_trip_original_scale(self, tmp_path):
        d = Dataset.from_arrays([0, 1, 0, 1], np.array([[1.0, 5.0], [2.0, 3.0], [4.0, 1.0], [3.0, 0.0]]),
                                np.array([[1.0], [0.0], [-1.0], [0.0]]))
        samples = [Sample(10, (1,), (0,), np.array([0.3, 2.0]), np.array([0.5]), np.array([-1.0]), -3.0),
                   Sample(20, (), (), np.array([0.1]), np.zeros(0), np.zeros(0), -4.0)]
        p = tmp_path / "trace.csv"
        write_trace(p, [samples], d)
        back, rn, sn = read_trace(p)
        assert rn == d.roi_names and sn == d.snp_names
        assert [s.active_rois for s in back] == [(1,), ()]
        s = back[0]
        # same linear predictor from raw rows as from standardized rows
        eta_raw = s.beta[0] + d.x_raw[:, 1] * s.beta[1]
        eta_std = 0.3 + 2.0 * d.x[:, 1]
        np.testing.assert_allclose(eta_raw, eta_std, rtol=1e-12)
        assert s.alpha[0] == 0.5 and s.delta[0] == -1.0

    def test_format_helpers(self, tmp_path):
        assert fmt(None) == "" and fmt(math.nan) == ""
        assert float(fmt(0.1 + 0.2)) == 0.1 + 0.2
        write_json_atomic(tmp_path / "m.json", {"a": np.float64(1.5), "b": np.arange(2)})
        assert (tmp_path / "m.json").read_text().count("1.5") == 1
