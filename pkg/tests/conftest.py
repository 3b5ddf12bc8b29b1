"""
Fixtures compartidas por los tests
"""

import numpy as np
import pytest
import torch

from cgt.config.config import ModelConfig, ScoringConfig, TrainConfig
from cgt.models.graph import CausalGraphPrior, LaggedEdge
from cgt.models.series import SeriesFrame
from cgt.services.training import build_blocks


@pytest.fixture
def tiny_model_cfg():
    """Configuración mínima en doble precisión (W=4, D=3, tau_max=2, d=8, d_z=2)"""
    return ModelConfig(
        W=4, tau_max=2, D=3, d_model=8, n_heads=2, n_layers=1, d_ff=16, d_z=2, S=2, dtype="float64"
    )


@pytest.fixture
def chain_graph():
    """0 -(1)-> 1 -(1)-> 2, con autorregresion de 1; el sensor 2 no es padre de nadie"""
    return CausalGraphPrior(
        3,
        2,
        [LaggedEdge(0, 1, 1), LaggedEdge(1, 1, 1), LaggedEdge(1, 1, 2)],
    )


@pytest.fixture
def small_frame():
    rng = np.random.default_rng(7)
    return SeriesFrame(rng.normal(size=(60, 3)))


@pytest.fixture
def fast_train_cfg():
    return TrainConfig(epochs=2, E_warm=1, batch_size=8, seed=3)


@pytest.fixture
def scoring_cfg():
    return ScoringConfig(aggregation="mean", topk=1, batch_size=16, seed=5)


@pytest.fixture
def tiny_blocks(tiny_model_cfg, chain_graph):
    blocks = build_blocks(tiny_model_cfg, chain_graph, seed=11)
    for block in blocks:
        block.eval()
    return blocks


def randomize(block, scale=0.3, seed=0):
    """Parámetros aleatorios (las salidas gaussianas arrancan en cero)"""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in block.named_parameters():
            noise = torch.randn(param.shape, generator=generator, dtype=param.dtype)
            if name == "gate_logits":
                param.copy_(noise)
            else:
                param.add_(scale * noise)
    return block


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: corridas largas (usar -m 'not slow' para omitirlas)")
