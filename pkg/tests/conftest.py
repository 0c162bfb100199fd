import time
from types import SimpleNamespace

import numpy as np
import pytest

from surformer.data import balance_by_augmentation, generate_dataset
from surformer.models import (EncoderConfig, Surformer, SurformerConfig, TactileTransformer,
                              TactileTransformerConfig)
from surformer.pipeline import dataset_features


def toy_surformer_config():
    return SurformerConfig(
        tactile=EncoderConfig(7, [8], latent_dim=16, tokens=2, dropout=0.0),
        vision=EncoderConfig(6, [8], latent_dim=16, tokens=2, dropout=0.0),
        num_heads=2, head_dim=8, block_ffn_dim=16, fusion_hidden_dim=16,
        head_dims=[32, 16, 8], dropout=0.0,
        # A shrunken final layer scales every upstream gradient down toward finite-difference noise.
        classifier_init_scale=1.0,
    )


def toy_tactile_transformer_config():
    return TactileTransformerConfig(n_features=7, d_model=8, n_layers=2, n_heads=2, ffn_dim=16,
                                    head_dim=8, dropout=0.0)


@pytest.fixture
def toy_surformer():
    return Surformer(toy_surformer_config(), seed=3)


@pytest.fixture
def toy_tactile_transformer():
    return TactileTransformer(toy_tactile_transformer_config(), seed=3)


@pytest.fixture
def toy_batch():
    rng = np.random.default_rng(11)
    return rng.normal(size=(6, 7)), rng.normal(size=(6, 6)), np.array([0, 1, 2, 3, 4, 0])


@pytest.fixture(scope="session")
def calibrated_data():
    """Full-size balanced dataset (seed 0) with its feature table and embeddings; about a minute."""
    t0 = time.perf_counter()
    original = generate_dataset(seed=0)
    balanced = balance_by_augmentation(original, seed=0)
    features = dataset_features(balanced)
    return SimpleNamespace(original=original, balanced=balanced, features=features,
                           embeddings=balanced.embeddings(), labels=balanced.labels,
                           seconds=time.perf_counter() - t0)


# One line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
