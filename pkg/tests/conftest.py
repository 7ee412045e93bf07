import numpy as np
import pytest

from ldgcouple.checks._support import slice_mesh, small_config
from ldgcouple.config import RunConfig
from ldgcouple.mesh import LayeredSliceMesh


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def config() -> RunConfig:
    return small_config()


@pytest.fixture
def mesh(config: RunConfig) -> LayeredSliceMesh:
    return slice_mesh(config)


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("LDG_LOG_LEVEL", "LDG_LOG_FORMAT", "LDG_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
