import numpy as np
import pytest
from fastapi.testclient import TestClient

from aavit.dataset import synth_corpus
from aavit.models.checkpoint import save_checkpoint
from aavit.models.vit import AAViT
from aavit.routers.scoring import get_scorer
from aavit.schemas.model import HeadKind, ModelConfig
from aavit.schemas.train import TrainConfig
from aavit.tensor import Precision
from main import app

# 8x8 images, 4x4 patches: four tokens of width 8
TOY_MODEL = dict(
    image_size=8, patch_size=4, embed_dim=8, depth=1, num_heads=2,
    encoder_mlp_ratio=2, mlp_hidden=8, pool_out=4,
)


def toy_config(head_kind: HeadKind = HeadKind.AAMLP, **overrides) -> ModelConfig:
    fields = dict(TOY_MODEL, head_kind=head_kind)
    fields.update(overrides)
    return ModelConfig(**fields)


@pytest.fixture
def verification_config():
    """Toy AAMLP model in 64-bit precision, for gradient checks"""
    return toy_config(precision=Precision.VERIFICATION)


@pytest.fixture
def toy_model():
    """Toy AAMLP model in standard precision"""
    return AAViT(toy_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corpus(tmp_path):
    """Small synthetic corpus of 8x8 frames, two frames per video"""
    return synth_corpus(tmp_path / "corpus", {"train": 8, "dev": 4, "test": 4}, 8, seed=7, frames_per_video=2)


@pytest.fixture
def quick_train_config():
    return TrainConfig(lr=3e-3, batch_size=4, epochs=2, seed=3, checkpoint_every=2, log_every=1)


@pytest.fixture
def checkpoint_file(tmp_path, toy_model):
    """Untrained toy model saved to disk"""
    return save_checkpoint(tmp_path / "model.aavt", toy_model.config, toy_model.params)


@pytest.fixture
def client(toy_model):
    """Create a test client with the scorer dependency overridden"""
    scorer = toy_model.frozen()

    def override_get_scorer():
        return scorer

    app.dependency_overrides[get_scorer] = override_get_scorer
    with TestClient(app) as test_client:
        yield test_client
    app.dependency_overrides.clear()


@pytest.fixture
def make_config():
    """Factory for toy model configs: make_config(head_kind, **overrides)"""
    return toy_config
