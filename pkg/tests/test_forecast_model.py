"""
Tests del bloque de pronóstico: máscara dura, inicialización y formas
"""

import dataclasses

import numpy as np
import pytest
import torch

from cgt.errors import ModelError
from cgt.models.block import GATE_INIT_OTHER, GATE_INIT_PARENT, ForecastBlock
from cgt.services.causal_graph import parent_mask
from tests.conftest import randomize


def _inputs(cfg, B=5, seed=0):
    rng = np.random.default_rng(seed)
    return torch.as_tensor(rng.normal(size=(B, cfg.W, cfg.P)), dtype=torch.float64)


def test_causal_path_ignores_non_parent_columns(tiny_model_cfg, chain_graph):
    """Cambiar columnas no-padre deja las salidas causales identicas bit a bit"""
    pi = parent_mask(chain_graph, 1).pi
    block = randomize(ForecastBlock(tiny_model_cfg, 1, pi, seed=4), seed=1).eval()
    X = _inputs(tiny_model_cfg)
    X_other = X.clone()
    X_other[:, :, pi < 0.5] = torch.randn(X[:, :, pi < 0.5].shape, dtype=torch.float64) * 100.0

    first = block.forward_infer(X, 3, torch.Generator().manual_seed(0))
    second = block.forward_infer(X_other, 3, torch.Generator().manual_seed(0))
    for (c1, _), (c2, _) in zip(first, second):
        assert torch.equal(c1.mu, c2.mu)
        assert torch.equal(c1.logvar, c2.logvar)
    assert torch.equal(block.encode_causal(X), block.encode_causal(X_other))


def test_shadow_path_sees_non_parent_columns(tiny_model_cfg, chain_graph):
    pi = parent_mask(chain_graph, 1).pi
    block = randomize(ForecastBlock(tiny_model_cfg, 1, pi, seed=4), seed=1).eval()
    X = _inputs(tiny_model_cfg)
    X_other = X.clone()
    X_other[:, :, pi < 0.5] += 5.0
    (_, aux_1), = block.forward_infer(X, 1, torch.Generator().manual_seed(0))
    (_, aux_2), = block.forward_infer(X_other, 1, torch.Generator().manual_seed(0))
    assert not torch.equal(aux_1.mu, aux_2.mu)


def test_gate_initialization(tiny_model_cfg, chain_graph):
    pi = parent_mask(chain_graph, 1).pi
    alpha = ForecastBlock(tiny_model_cfg, 1, pi).gate().detach().numpy()
    assert np.allclose(alpha[pi > 0.5], GATE_INIT_PARENT)
    assert np.allclose(alpha[pi < 0.5], GATE_INIT_OTHER)


def test_fresh_block_predicts_standard_normal(tiny_model_cfg, chain_graph):
    """Con las salidas en cero, mu = 0 y log v = 0 en ambos caminos"""
    block = ForecastBlock(tiny_model_cfg, 2, parent_mask(chain_graph, 2).pi).eval()
    X = _inputs(tiny_model_cfg)
    for causal, aux in block.forward_infer(X, 2, torch.Generator().manual_seed(1)):
        assert torch.all(causal.mu == 0) and torch.all(causal.logvar == 0)
        assert torch.all(aux.mu == 0) and torch.all(aux.logvar == 0)


def test_target_without_parents_is_constant(tiny_model_cfg, chain_graph):
    """Sin padres la entrada causal es todo cero: la predicción no depende de X"""
    block = randomize(ForecastBlock(tiny_model_cfg, 0, parent_mask(chain_graph, 0).pi), seed=2)
    h_1 = block.encode_causal(_inputs(tiny_model_cfg, seed=1))
    h_2 = block.encode_causal(_inputs(tiny_model_cfg, seed=2))
    assert torch.equal(h_1, h_2)


def test_same_seed_same_parameters(tiny_model_cfg, chain_graph):
    pi = parent_mask(chain_graph, 1).pi
    first = ForecastBlock(tiny_model_cfg, 1, pi, seed=9).state_dict()
    second = ForecastBlock(tiny_model_cfg, 1, pi, seed=9).state_dict()
    other_target = ForecastBlock(tiny_model_cfg, 2, pi, seed=9).state_dict()
    assert all(torch.equal(first[k], second[k]) for k in first)
    assert not torch.equal(first["projection.weight"], other_target["projection.weight"])


def test_block_construction_does_not_touch_global_rng(tiny_model_cfg, chain_graph):
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    ForecastBlock(tiny_model_cfg, 1, parent_mask(chain_graph, 1).pi)
    assert torch.equal(torch.rand(3), expected)


def test_sinusoidal_encoding_changes_the_trunk(tiny_model_cfg, chain_graph):
    cfg = dataclasses.replace(tiny_model_cfg, positional_encoding="sinusoidal")
    pi = parent_mask(chain_graph, 1).pi
    plain = randomize(ForecastBlock(tiny_model_cfg, 1, pi, seed=3), seed=5)
    encoded = randomize(ForecastBlock(cfg, 1, pi, seed=3), seed=5)
    X = _inputs(tiny_model_cfg)
    assert encoded.positional.shape == (cfg.W, cfg.d_model)
    assert not torch.equal(plain.encode_causal(X), encoded.encode_causal(X))


def test_sample_latent_moments():
    """mu + exp(logvar / 2) * eps con eps ~ N(0, 1): media mu y varianza exp(logvar)"""
    mu = torch.tensor([1.5, -2.0], dtype=torch.float64)
    logvar = torch.log(torch.tensor([0.25, 4.0], dtype=torch.float64))
    eps = torch.randn((200_000, 2), generator=torch.Generator().manual_seed(6), dtype=torch.float64)
    z = ForecastBlock.sample_latent(mu, logvar, eps)
    assert torch.allclose(z.mean(dim=0), mu, atol=0.02)
    assert torch.allclose(z.var(dim=0), torch.exp(logvar), rtol=0.02)
    # eps = 0 devuelve la media exacta
    assert torch.equal(ForecastBlock.sample_latent(mu, logvar, torch.zeros(2, dtype=torch.float64)), mu)


def test_logvar_is_clamped(tiny_model_cfg, chain_graph):
    block = ForecastBlock(tiny_model_cfg, 1, parent_mask(chain_graph, 1).pi)
    with torch.no_grad():
        block.causal_net.logvar.bias.fill_(50.0)
    h_c = block.encode_causal(_inputs(tiny_model_cfg))
    prediction = block.causal_head(h_c, torch.zeros(h_c.shape[0], tiny_model_cfg.d_z, dtype=torch.float64))
    assert torch.all(prediction.logvar == tiny_model_cfg.logvar_hi)


def test_rejects_bad_input_shape(tiny_model_cfg, chain_graph):
    block = ForecastBlock(tiny_model_cfg, 1, parent_mask(chain_graph, 1).pi)
    with pytest.raises(ModelError):
        block.encode_causal(torch.zeros(2, tiny_model_cfg.W + 1, tiny_model_cfg.P, dtype=torch.float64))
    with pytest.raises(ModelError):
        block.encode_causal(torch.zeros(tiny_model_cfg.W, tiny_model_cfg.P, dtype=torch.float64))


def test_rejects_invalid_configuration(tiny_model_cfg, chain_graph):
    pi = parent_mask(chain_graph, 1).pi
    with pytest.raises(ModelError):
        ForecastBlock(dataclasses.replace(tiny_model_cfg, d_model=9), 1, pi)
    with pytest.raises(ModelError):
        ForecastBlock(tiny_model_cfg, 1, pi[:-1])
    with pytest.raises(ModelError):
        ForecastBlock(dataclasses.replace(tiny_model_cfg, logvar_lo=1.0, logvar_hi=0.0), 1, pi)


def test_parameter_groups_cover_the_block(tiny_model_cfg, chain_graph):
    block = ForecastBlock(tiny_model_cfg, 1, parent_mask(chain_graph, 1).pi)
    grouped = [p for params in block.parameter_groups().values() for p in params]
    assert len(grouped) == len(list(block.parameters()))
    assert {id(p) for p in grouped} == {id(p) for p in block.parameters()}
