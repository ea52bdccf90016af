import numpy as np
import pytest

from margintune import TrainConfig, generate_synthetic_bank


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def separable_bank():
    """Orthogonal class means, texts equal to means, zero noise: every image
    vector coincides with its class text vector."""
    return generate_synthetic_bank(classes=6, dim=16, separation=2.0,
                                   text_alignment=1.0, augs_per_image=3,
                                   originals_per_class=20, noise=0.0, seed=9)


@pytest.fixture(scope="session")
def noisy_bank():
    """Moderate overlap and aligned texts; 1-shot episodes are learnable but
    not saturated."""
    return generate_synthetic_bank(classes=8, dim=32, separation=0.6,
                                   text_alignment=0.8, augs_per_image=6,
                                   originals_per_class=18, noise=0.05, seed=3)


@pytest.fixture
def quick_config():
    return TrainConfig(epochs=8, episodes=3, way=5, shot=1, query=6,
                       master_seed=17, select_one_shot=3)
