import numpy as np
import pytest

from hiera_est.config import ConfigError, apply_overrides, load_config


def base_doc():
    return {
        "n": 2,
        "n_agents": 3,
        "theta": [1.0, -2.0],
        "seed": 7,
        "coeff_range": [0, 2],
        "freq_range": [0.5, 3.0],
        "topology": {"edges": [[0, 1], [1, 2]]},
        "k": 5.0,
    }


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(base_doc())
        assert cfg.h == 1e-3 and cfg.t_end == 20.0 and cfg.decimation == 10
        assert cfg.estimators == ("ge", "drem")
        assert cfg.epsilon == 0.0 and cfg.p_loss == 0.0
        np.testing.assert_array_equal(cfg.gamma_ge, np.eye(2))
        np.testing.assert_array_equal(cfg.gamma_drem, np.ones(2))
        assert cfg.drem_filters.r == 1

    def test_unknown_key_rejected(self):
        doc = base_doc()
        doc["tend"] = 5.0  # typo for t_end
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(doc)

    def test_missing_required_key(self):
        doc = base_doc()
        del doc["theta"]
        with pytest.raises(ConfigError, match="theta"):
            load_config(doc)

    def test_theta_length_checked(self):
        doc = base_doc()
        doc["theta"] = [1.0, 2.0, 3.0]
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_topology_and_schedule_exclusive(self):
        doc = base_doc()
        doc["schedule"] = {
            "graphs": [{"edges": [[0, 1], [1, 2]]}],
            "segments": [[0.0, 0]],
            "dwell_min": 1.0,
        }
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_schedule_built(self):
        doc = base_doc()
        del doc["topology"]
        doc["schedule"] = {
            "graphs": [{"edges": [[0, 1], [1, 2]]}, {"edges": [[0, 2], [1, 2]]}],
            "segments": [[0.0, 0], [2.0, 1]],
            "dwell_min": 2.0,
        }
        cfg = load_config(doc)
        assert len(cfg.schedule.topologies) == 2

    def test_auto_gain_accepted(self):
        doc = base_doc()
        doc["k"] = "auto"
        assert load_config(doc).k == "auto"

    def test_bad_gain_rejected(self):
        doc = base_doc()
        doc["k"] = -1.0
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_duplicate_estimators_rejected(self):
        doc = base_doc()
        doc["estimators"] = ["ge", "ge"]
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_unknown_estimator_rejected(self):
        doc = base_doc()
        doc["estimators"] = ["kalman"]
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_gain_matrix_validation(self):
        doc = base_doc()
        doc["gamma_ge"] = [[1.0, 2.0], [0.0, 1.0]]  # not symmetric
        with pytest.raises(ConfigError):
            load_config(doc)
        doc["gamma_ge"] = [[1.0, 0.0], [0.0, -1.0]]  # not PD
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_gamma_drem_diag(self):
        doc = base_doc()
        doc["gamma_drem"] = [0.1, 0.2]
        np.testing.assert_array_equal(load_config(doc).gamma_drem, [0.1, 0.2])
        doc["gamma_drem"] = [0.1, -0.2]
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_p_loss_range(self):
        doc = base_doc()
        doc["p_loss"] = 1.0
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_coeff_tables_exclusive_with_ranges(self):
        doc = base_doc()
        doc["coeff_tables"] = {
            "offset": [[[1.0, 0.0]]] * 3,
            "sin_amp": [[[0.0, 0.0]]] * 3,
            "cos_amp": [[[0.0, 0.0]]] * 3,
            "freq": [[[0.0, 0.0]]] * 3,
        }
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_coeff_tables_dimension_check(self):
        doc = base_doc()
        del doc["coeff_range"], doc["freq_range"]
        doc["coeff_tables"] = {
            "offset": [[[1.0, 0.0, 0.0]]] * 3,  # 3 columns but n=2
            "sin_amp": [[[0.0, 0.0, 0.0]]] * 3,
            "cos_amp": [[[0.0, 0.0, 0.0]]] * 3,
            "freq": [[[0.0, 0.0, 0.0]]] * 3,
        }
        with pytest.raises(ConfigError):
            load_config(doc)

    def test_echo_includes_resolved_tables(self):
        cfg = load_config(base_doc())
        echo = cfg.echo()
        assert "coeff_tables_resolved" in echo
        assert echo["k"] == 5.0

    def test_analysis_block(self):
        doc = base_doc()
        doc["analysis"] = {"T_grid": [0.1, 0.2], "horizon": 3.0}
        cfg = load_config(doc)
        assert cfg.analysis.T_grid == (0.1, 0.2)
        assert cfg.analysis.horizon == 3.0
        doc["analysis"] = {"window": 1.0}
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(doc)


class TestOverrides:
    def test_scalar_override(self):
        out = apply_overrides(base_doc(), ["epsilon=0.036", "k=3.0"])
        assert out["epsilon"] == 0.036 and out["k"] == 3.0

    def test_dotted_path(self):
        out = apply_overrides(base_doc(), ["analysis.horizon=2.5"])
        assert out["analysis"]["horizon"] == 2.5

    def test_json_values(self):
        out = apply_overrides(base_doc(), ['estimators=["ge"]'])
        assert out["estimators"] == ["ge"]

    def test_string_fallback(self):
        out = apply_overrides(base_doc(), ["k=auto"])
        assert out["k"] == "auto"

    def test_original_untouched(self):
        doc = base_doc()
        apply_overrides(doc, ["k=9.0"])
        assert doc["k"] == 5.0

    def test_malformed_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(base_doc(), ["epsilon"])
