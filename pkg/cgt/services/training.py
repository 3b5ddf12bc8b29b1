"""
Entrenamiento de los bloques por objetivo
Objetivo completo con calentamiento, regularizadores de compuerta, Adam y recorte de gradiente
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from cgt.errors import TrainingError
from cgt.models.block import ForecastBlock, block_seed
from cgt.models.report import LossBreakdown
from cgt.services.causal_graph import check_graph, parent_masks
from cgt.services.data_pipeline import iterate_target_batches

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


# ---------------------------------------------------------------------------
# Formas cerradas
# ---------------------------------------------------------------------------


def gaussian_nll(y, mu, logvar):
    """1/2 (log 2pi + log v + (y - mu)^2 / v), elemento a elemento"""
    exp = torch.exp if torch.is_tensor(logvar) else np.exp
    return 0.5 * (LOG_2PI + logvar + (y - mu) ** 2 * exp(-logvar))


def kl_diag_gaussians(mu_q, logvar_q, mu_p, logvar_p):
    """KL(q || p) entre gaussianas diagonales, sumado sobre la última dimensión"""
    if torch.is_tensor(mu_q):
        terms = logvar_p - logvar_q + (torch.exp(logvar_q) + (mu_q - mu_p) ** 2) / torch.exp(logvar_p) - 1.0
        return 0.5 * terms.sum(dim=-1)
    mu_q, logvar_q, mu_p, logvar_p = (np.atleast_1d(np.asarray(a, dtype=np.float64))
                                      for a in (mu_q, logvar_q, mu_p, logvar_p))
    terms = logvar_p - logvar_q + (np.exp(logvar_q) + (mu_q - mu_p) ** 2) / np.exp(logvar_p) - 1.0
    return 0.5 * terms.sum(axis=-1)


# ---------------------------------------------------------------------------
# Regularizadores y calendarios
# ---------------------------------------------------------------------------


def gate_regularizers(logits, pi, cfg, tau_max):
    """
    R_prior, R_other, R_push, R_margin, R_grp sobre alpha = sigmoid(logits)
    Un conjunto vacío (sin padres o sin no-padres) aporta 0 a su media condicional
    """
    alpha = torch.sigmoid(logits)
    parent = pi > 0.5
    other = ~parent
    zero = logits.new_zeros(())

    weights = torch.where(parent, logits.new_tensor(cfg.parent_bce_weight), logits.new_tensor(1.0))
    bce = F.binary_cross_entropy_with_logits(logits, parent.to(logits.dtype), weight=weights)

    mean_par = alpha[parent].mean() if parent.any() else zero
    mean_oth = alpha[other].mean() if other.any() else zero
    push = (1.0 - alpha[parent]).mean() if parent.any() else zero

    group_norms = alpha.view(-1, tau_max).norm(dim=1)

    return {
        "R_prior": cfg.lambda_prior * bce,
        "R_other": cfg.lambda_other * mean_oth,
        "R_push": cfg.lambda_push * push,
        "R_margin": cfg.lambda_m * torch.relu(mean_oth - mean_par + cfg.margin),
        "R_grp": cfg.lambda_grp * group_norms.mean(),
    }


def schedules(epoch, cfg):
    """Rampa lineal de gamma y beta durante las primeras E_warm épocas"""
    ramp = (epoch + 1) / cfg.E_warm
    gamma_t = min(cfg.gamma, ramp * cfg.gamma)
    beta_t = cfg.beta * min(1.0, ramp)
    return gamma_t, beta_t


# ---------------------------------------------------------------------------
# Objetivo
# ---------------------------------------------------------------------------


def objective_terms(block, X, y, eps, cfg, gamma_t, beta_t):
    """Todos los terminos como tensores; `total` es la suma ponderada"""
    out = block.forward_train(X, y, eps)
    terms = {
        "L_c": gaussian_nll(y, out.causal.mu, out.causal.logvar).mean(),
        # aux ya lleva mu_c y log v_c desacoplados
        "L_o": gaussian_nll(y, out.aux.mu, out.aux.logvar).mean(),
        "L_KL": kl_diag_gaussians(out.post_mu, out.post_logvar, out.prior_mu, out.prior_logvar).mean(),
        "L_res": (out.delta_mu ** 2).mean() + (out.delta_logvar ** 2).mean(),
    }
    terms.update(gate_regularizers(block.gate_logits, block.parent_mask, cfg, block.cfg.tau_max))
    terms["total"] = (
        (1.0 - gamma_t) * terms["L_c"]
        + gamma_t * terms["L_o"]
        + beta_t * terms["L_KL"]
        + cfg.lambda_res * terms["L_res"]
        + terms["R_prior"]
        + terms["R_other"]
        + terms["R_push"]
        + terms["R_margin"]
        + terms["R_grp"]
    )
    return terms


def clip_gradients(parameters, max_norm):
    """Recorte por norma global; devuelve la norma previa al recorte"""
    params = [p for p in parameters if p.grad is not None]
    if not params:
        return 0.0
    return float(torch.nn.utils.clip_grad_norm_(params, max_norm))


def make_optimizer(block, cfg):
    return torch.optim.Adam(block.parameters(), lr=cfg.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS)


def train_step(block, optimizer, batch, cfg, gamma_t, beta_t, generator):
    """
    Un paso de Adam sobre un lote
    Devuelve LossBreakdown, o None si la pérdida no es finita (lote saltado)
    """
    X = torch.as_tensor(batch.inputs, dtype=block.dtype)
    y = torch.as_tensor(batch.targets, dtype=block.dtype)
    eps = torch.randn((len(y), block.cfg.d_z), generator=generator, dtype=block.dtype)

    optimizer.zero_grad(set_to_none=True)
    terms = objective_terms(block, X, y, eps, cfg, gamma_t, beta_t)
    if not torch.isfinite(terms["total"]):
        return None

    terms["total"].backward()
    norm = clip_gradients(block.parameters(), cfg.clip_norm)
    if not math.isfinite(norm):
        optimizer.zero_grad(set_to_none=True)
        return None
    optimizer.step()

    values = {name: float(value.detach()) for name, value in terms.items()}
    return LossBreakdown(**values, gamma_t=gamma_t, beta_t=beta_t)


def epoch_seed(seed, target, epoch):
    return int(np.random.SeedSequence([seed, target, epoch]).generate_state(1)[0])


def train_block(block, frame, cfg):
    """
    Entrenar un bloque sobre la serie escalada
    Devuelve (bloque, historial de LossBreakdown por época)
    """
    model_cfg = block.cfg
    generator = torch.Generator().manual_seed(block_seed(cfg.seed, block.target))
    optimizer = make_optimizer(block, cfg)
    history = []

    block.train()
    for epoch in range(cfg.epochs):
        gamma_t, beta_t = schedules(epoch, cfg)
        batches = iterate_target_batches(
            frame,
            block.target,
            model_cfg.W,
            model_cfg.tau_max,
            cfg.batch_size,
            shuffle_seed=epoch_seed(cfg.seed, block.target, epoch),
        )
        results, skipped = [], 0
        for batch in batches:
            result = train_step(block, optimizer, batch, cfg, gamma_t, beta_t, generator)
            if result is None:
                skipped += 1
            else:
                results.append(result)

        if not results:
            raise TrainingError(
                f"Objetivo {block.target}, época {epoch}: todos los lotes tuvieron pérdida no finita"
            )
        if skipped:
            logger.warning(f"Objetivo {block.target}, época {epoch}: {skipped} lotes saltados")

        summary = LossBreakdown.mean_of(results, gamma_t, beta_t, skipped)
        history.append(summary)
        logger.info(
            f"Objetivo {block.target} época {epoch + 1}/{cfg.epochs}: "
            f"total={summary.total:.5f} L_c={summary.L_c:.5f} L_o={summary.L_o:.5f}"
        )
    block.eval()
    return block, history


def build_blocks(model_cfg, graph, seed):
    masks = parent_masks(graph)
    return [ForecastBlock(model_cfg, i, masks[i], seed=seed) for i in range(model_cfg.D)]


def train_all(frame, graph, model_cfg, cfg, workers=1):
    """
    Un bloque por objetivo, entrenados en paralelo (un worker por objetivo)
    Los historiales se juntan en orden de objetivo
    """
    check_graph(graph, frame.D, model_cfg.tau_max)
    blocks = build_blocks(model_cfg, graph, cfg.seed)
    logger.info(f"Entrenando {len(blocks)} bloques ({cfg.epochs} épocas, workers={workers})")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda b: train_block(b, frame, cfg), blocks))

    trained = [block for block, _ in results]
    histories = {block.target: history for block, history in results}
    return trained, histories


def write_training_log(path, histories):
    """Una fila por (objetivo, época) con todos los campos de LossBreakdown"""
    rows = []
    for target in sorted(histories):
        for epoch, breakdown in enumerate(histories[target]):
            rows.append({"target": target, "epoch": epoch, **breakdown.to_dict()})
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g")
