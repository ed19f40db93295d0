import pytest

from microopt.config import ExperimentConfig, config_from_dict, derive_seed, load_config
from microopt.domain import ConfigurationError
from microopt.oracle import AxisRange


class TestDefaults:
    def test_embedded_defaults(self):
        cfg = load_config()
        assert cfg == ExperimentConfig()
        assert cfg.sweep.q_thresh == (3.0, 4.0, 5.0)
        assert cfg.optimizer.n_mc_certify == 512
        assert cfg.grid.samples_per_point == 100

    def test_overrides(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('seed = 4\n[optimizer]\ntau1_max = 7\n[optimizer.surrogate]\nrho = 2.5\n'
                        '[grid]\ncpu_range = [500, 1500, 500]\n[sweep]\nq_thresh = [3.0]\n')
        cfg = load_config(path, seed=9, out_dir=str(tmp_path / "o"))
        assert cfg.seed == 9
        assert cfg.out == tmp_path / "o"
        assert cfg.optimizer.tau1_max == 7 and cfg.optimizer.surrogate.rho == 2.5
        assert cfg.grid.cpu_range == AxisRange(500.0, 1500.0, 500.0)
        assert cfg.sweep.q_thresh == (3.0,)

    def test_to_dict_roundtrip(self):
        d = ExperimentConfig().to_dict()
        assert d["sweep"]["beta_thresh"] == [0.1, 0.2, 0.3]
        assert d["train"]["epochs"] == 3000


class TestRejects:
    @pytest.mark.parametrize("doc", [
        {"bogus": 1},
        {"optimizer": {"tau_one": 3}},
        {"optimizer": {"alpha1": -1.0}},
        {"optimizer": {"surrogate": {"rho": 0.0}}},
        {"grid": {"cpu_range": [1, 2]}},
        {"sweep": {"beta_thresh": [1.5]}},
        {"sweep": {"q_thresh": []}},
        {"sweep": {"q_thresh": [9.0]}},
        {"methods": ["microopt", "oracle_magic"]},
        {"traffic": {"trace_csv": "/nonexistent/trace.csv"}},
        {"tau": 0},
        {"oracle": "fast"},
    ])
    def test_bad_values(self, doc):
        with pytest.raises(ConfigurationError):
            config_from_dict(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.toml")

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = = 1\n")
        with pytest.raises(ConfigurationError):
            load_config(path)


class TestSeeds:
    def test_stable_and_distinct(self):
        assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
        assert len({derive_seed(0, "a"), derive_seed(1, "a"), derive_seed(0, "b"), derive_seed(0, "a", "b")}) == 4

    def test_range(self):
        assert 0 <= derive_seed(123, "x") < 2**63
