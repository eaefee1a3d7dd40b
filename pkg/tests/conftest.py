import numpy as np
import pytest

from koopest import ClosedQuadraticParams, config_from_dict


@pytest.fixture
def baseline_params():
    return ClosedQuadraticParams(rho=0.2, mu=0.3, c=1.0)


@pytest.fixture
def strong_params():
    return ClosedQuadraticParams(rho=0.8, mu=0.8, c=0.9)


@pytest.fixture
def smoke_config(tmp_path):
    """Small closed-quadratic config for harness and CLI smoke tests."""

    def make(**overrides):
        data = {
            "label": "smoke",
            "system": {
                "kind": "closed-quadratic",
                "params": {"rho": 0.2, "mu": 0.3, "c": 1.0},
                "noise": {"kind": "gaussian-iid", "std": [1.0, 1.0]},
            },
            "dictionary": {"kind": "closed-quadratic"},
            "domain": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
            "T_grid": [200, 400],
            "n_realizations": 4,
            "base_seed": 987654321,
            "epsilon_list": [0.5],
            "n_term_realizations": 8,
            "closure_n_states": 12,
            "closure_n_mc": 200,
            "output_dir": str(tmp_path / "out"),
        }
        data.update(overrides)
        return config_from_dict(data)

    return make


def combined_se(se_a, se_b):
    return float(np.sqrt(se_a**2 + se_b**2))
