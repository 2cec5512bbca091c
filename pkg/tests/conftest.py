from __future__ import annotations

from pathlib import Path

import pytest

from maskbeam.core import AttackConfig, Instance, TextSequence
from maskbeam.models import (
    EmbeddingSimilarity,
    ModelBundle,
    ScriptedOracle,
    TableInfiller,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture()
def fig1_bundle() -> ModelBundle:
    return ModelBundle(
        target=ScriptedOracle.from_file(FIXTURES / "fig1_oracle.json"),
        infiller=TableInfiller.from_file(FIXTURES / "fig1_infiller.json"),
        similarity=EmbeddingSimilarity.from_file(FIXTURES / "fig1_embeddings.json"),
    )


@pytest.fixture()
def fig1_instance() -> Instance:
    return Instance(id="fig1", text=TextSequence.from_text("start"), gold=1)


@pytest.fixture()
def fig1_config() -> AttackConfig:
    return AttackConfig(max_iters=2, alpha=5e-3, beta=0.7)
