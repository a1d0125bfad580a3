"""Fixtures compartidas: generadores sembrados y un modelo diminuto"""

import sys

import numpy as np
import pytest
from loguru import logger

from src.data.synthetic import gen_data
from src.models.apformer_models import ModelConfig, PruneConfig, SsaConfig, SyntheticSpec
from src.utils.config import Config


TINY_OVERRIDES = {
    "seed": 0,
    "model.image_size": [16, 16],
    "model.encoder_widths": [4, 8, 8],
    "model.embed_dim": 8,
    "model.heads": 2,
    "model.d_m": 4,
    "model.d_ff": 16,
    "model.blocks": 1,
    "prune.g_frozen_rounds": 2,
    "train.lr": 0.001,
    "train.batch_size": 2,
    "train.rounds": 4,
    "train.augment": False,
    "train.log_every": 1,
    "data.count": 10,
    "data.image_size": [16, 16],
    "logging.file": None,
}


@pytest.fixture(autouse=True)
def _restore_logging():
    yield
    logger.remove()
    logger.add(sys.stderr, level="INFO")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_rng():
    def factory(seed: int = 0) -> np.random.Generator:
        return np.random.default_rng(seed)

    return factory


def tiny_model_config(**overrides) -> ModelConfig:
    """Imagen 16x16, encoder (4, 8, 8), d=8, 2 cabezas de d_m=4, 1 bloque; grid 2x2"""
    prune = overrides.pop("prune", PruneConfig(g_frozen_rounds=2))
    ssa = overrides.pop("ssa", SsaConfig())
    params = dict(
        image_size=(16, 16),
        encoder_widths=(4, 8, 8),
        embed_dim=8,
        heads=2,
        d_m=4,
        d_ff=16,
        blocks=1,
        prune=prune,
        ssa=ssa,
    )
    params.update(overrides)
    return ModelConfig(**params)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture
def tiny_cfg(tmp_path) -> Config:
    """Config completa del modelo diminuto (archivo inexistente -> valores por defecto)"""
    config = Config(tmp_path / "no_existe.yaml")
    for key, value in TINY_OVERRIDES.items():
        config.set(key, value)
    config.set("data.dir", str(tmp_path / "data"))
    return config


def random_attention(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Filas softmax de logits aleatorios"""
    logits = rng.normal(0.0, 1.5, (rows, cols))
    exps = np.exp(logits - logits.max(axis=1, keepdims=True))
    return exps / exps.sum(axis=1, keepdims=True)


@pytest.fixture
def tiny_dataset(tiny_cfg):
    """10 muestras 16x16 guardadas en data.dir de tiny_cfg"""
    _, dataset = gen_data(SyntheticSpec.from_config(tiny_cfg), tiny_cfg.get("data.dir"))
    return dataset
