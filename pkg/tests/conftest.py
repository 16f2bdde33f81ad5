import numpy as np
import pytest

from glyphflow import (
    ModelConfig,
    SamplerConfig,
    init_model,
    rasterize_text,
    reconstruct_capture,
)

# A deliberately small model so reconstruction fixtures stay cheap: 16 image
# tokens, joint length 20.
TINY = ModelConfig(d_model=16, n_heads=2, n_layers=2, patch=4, grid=4, t_txt=4, seed=0)
TINY_SAMPLER = SamplerConfig(steps=4, guidance=7.5, cutoff_step=2, noise_seed=0)


@pytest.fixture(scope="session")
def tiny_cfg():
    return TINY


@pytest.fixture(scope="session")
def tiny_weights():
    return init_model(TINY)


@pytest.fixture(scope="session")
def tiny_glyph():
    return rasterize_text("A", width=TINY.canvas, height=TINY.canvas, scale=1, patch=TINY.patch)


@pytest.fixture(scope="session")
def tiny_sampler():
    return TINY_SAMPLER


@pytest.fixture(scope="session")
def tiny_trace(tiny_weights, tiny_glyph):
    return reconstruct_capture(tiny_weights, tiny_glyph, "", TINY_SAMPLER)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
