import os

import pytest

from tpmr.types import NvParams


@pytest.fixture
def nv() -> NvParams:
    return NvParams()


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in list(os.environ):
        if name.startswith("TPMR_"):
            monkeypatch.delenv(name)
