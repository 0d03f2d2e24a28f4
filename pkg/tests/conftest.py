"""Pytest configuration and shared fixtures"""

import os
import sys
import numpy as np
import pytest
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))


@pytest.fixture(autouse=True)
def setup_environment(monkeypatch):
    """Serial sweeps and a clean settings cache for every test"""
    from blayer_verify.configs.settings import get_settings

    monkeypatch.setenv("BLAYER_VERIFY_WORKERS", "1")
    monkeypatch.delenv("BLAYER_VERIFY_OUT", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def ns2d():
    """Isentropic NS in 2-D at the default supersonic inflow endstate (ρ, m) = (1, 2, 0)"""
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("isentropic-ns-2d")


@pytest.fixture
def ns2d_subsonic():
    """Isentropic NS in 2-D with c = 1 and u = (1/2, 0), which has acoustic glancing points"""
    from blayer_verify.core.model_core import catalog_get

    # c² = κγρ^{γ−1} = 1 at ρ = 1 with κγ = 1
    return catalog_get("isentropic-ns-2d", {"gamma": 2.0, "kappa": 0.5}, [1.0, 0.5, 0.0])


@pytest.fixture
def counterexample():
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("counterexample-A1")


@pytest.fixture
def diag_system():
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("const-coeff-diag")


@pytest.fixture
def transport2d():
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("transport-parabolic", {"d": 2})


@pytest.fixture
def transport1d():
    from blayer_verify.core.model_core import catalog_get

    return catalog_get("transport-parabolic", {"d": 1})


@pytest.fixture
def constant_ns_profile(ns2d):
    """The trivial layer Ū ≡ U₊ on a short grid"""
    from blayer_verify.core.profile_solver import constant_profile

    system, endstate = ns2d
    return constant_profile(system, endstate, length=20.0, nodes=120)


@pytest.fixture(scope="session")
def ns1d_layer():
    """A genuine subsonic inflow layer: U₊ = (1, 1/2) with u(0) = 0.47, as in run_configs/ns1d-layer.json"""
    from blayer_verify.core.model_core import catalog_get
    from blayer_verify.core.profile_solver import solve_profile

    system, endstate = catalog_get("isentropic-ns-1d", endstate=[1.0, 0.5])
    profile = solve_profile(system, endstate, np.array([0.5 / 0.47, 0.47]))
    return system, endstate, profile


@pytest.fixture
def out_dir(tmp_path):
    """Fresh output directory for pipeline artifacts"""
    path = tmp_path / "out"
    path.mkdir()
    return path


def write_config(path, data):
    """Serialize a run config dict to ``path`` and return the path"""
    import json

    path = Path(path)
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def config_file(tmp_path):
    """Factory writing run configs into the test's temporary directory"""
    def _make(data, name="config.json"):
        return write_config(tmp_path / name, data)
    return _make


def pytest_configure(config):
    """Configure pytest"""
    config.addinivalue_line(
        "markers", "slow: mark test as slow"
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow tests in CI"""
    skip_slow = pytest.mark.skip(reason="Slow test")

    for item in items:
        if "slow" in item.keywords:
            if os.getenv('CI'):
                item.add_marker(skip_slow)
