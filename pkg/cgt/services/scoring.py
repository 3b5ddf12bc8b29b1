"""
Puntajes de anomalía: NLL causal y auxiliar por objetivo (promedio Monte Carlo),
mezcla con gamma y agregación entre objetivos
Las NLL se calculan en el espacio escalado (umbrales sin unidades)
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import torch

from cgt.errors import ScoringError
from cgt.models.block import block_seed
from cgt.models.report import ScoreSeries
from cgt.models.series import valid_timestamps
from cgt.services.data_pipeline import lag_tensor
from cgt.services.training import gaussian_nll

logger = logging.getLogger(__name__)

AGGREGATION_RULES = ("mean", "max", "topk")


def _score_block(block, frame, timestamps, S, seed, batch_size, input_frame=None, perturb=None):
    """NLL causal y auxiliar de un bloque sobre todos los instantes"""
    cfg = block.cfg
    source = frame if input_frame is None else input_frame
    generator = torch.Generator().manual_seed(block_seed(seed, block.target))
    causal_out, aux_out = [], []

    with torch.no_grad():
        for batch_index, start in enumerate(range(0, len(timestamps), batch_size)):
            chunk = timestamps[start : start + batch_size]
            X = lag_tensor(source.values, chunk, cfg.W, cfg.tau_max)
            if perturb is not None:
                X = perturb(block, X, batch_index)
            X = torch.as_tensor(X, dtype=block.dtype)
            y = torch.as_tensor(frame.values[chunk, block.target], dtype=block.dtype)

            predictions = block.forward_infer(X, S, generator)
            causal_nll = torch.stack(
                [gaussian_nll(y, causal.mu, causal.logvar) for causal, _ in predictions]
            ).mean(dim=0)
            aux_nll = torch.stack(
                [gaussian_nll(y, aux.mu, aux.logvar) for _, aux in predictions]
            ).mean(dim=0)
            causal_out.append(causal_nll.double().numpy())
            aux_out.append(aux_nll.double().numpy())

    return np.concatenate(causal_out), np.concatenate(aux_out)


def score_blocks(blocks, frame, S, seed, batch_size=256, workers=1, input_frame=None, perturb=None):
    """
    NLL de cualquier subconjunto de bloques: (instantes, {objetivo: (causal, aux)})
    Cada bloque usa su propio generador, así que recalcular un subconjunto
    reproduce exactamente los puntajes de esos objetivos
    """
    if not blocks:
        raise ScoringError("No hay bloques para puntuar")
    W, tau_max = blocks[0].cfg.W, blocks[0].cfg.tau_max
    if frame.T < W + tau_max + 1:
        raise ScoringError(
            f"Serie demasiado corta (T={frame.T}); se necesitan al menos {W + tau_max + 1} instantes"
        )
    if input_frame is not None and input_frame.values.shape != frame.values.shape:
        raise ScoringError("Las entradas alternativas deben tener la forma de la serie")
    timestamps = valid_timestamps(frame.T, W, tau_max)

    def run(block):
        return _score_block(block, frame, timestamps, S, seed, batch_size, input_frame, perturb)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run, blocks))
    return timestamps, {block.target: result for block, result in zip(blocks, results)}


def score_targets(blocks, frame, S, seed, batch_size=256, workers=1, input_frame=None, perturb=None):
    """
    Matrices T' x D de NLL causal y auxiliar
    input_frame reemplaza solo las entradas (los objetivos salen de frame)
    """
    if blocks and frame.D != len(blocks):
        raise ScoringError(f"La serie tiene D={frame.D} canales y el checkpoint {len(blocks)} bloques")
    timestamps, results = score_blocks(blocks, frame, S, seed, batch_size, workers, input_frame, perturb)

    causal = np.column_stack([results[i][0] for i in range(frame.D)])
    aux = np.column_stack([results[i][1] for i in range(frame.D)])
    if not (np.all(np.isfinite(causal)) and np.all(np.isfinite(aux))):
        raise ScoringError("Se obtuvieron puntajes no finitos")
    return timestamps, causal, aux


def blend(causal, aux, gamma):
    """(1 - gamma) s_c + gamma s_o por entrada"""
    if not 0.0 <= gamma <= 1.0:
        raise ScoringError(f"gamma={gamma} fuera de [0, 1]")
    return (1.0 - gamma) * causal + gamma * aux


def aggregate(blended, rule="mean", k=1):
    """Reducción por fila: media, máximo o media de los k mayores"""
    if rule not in AGGREGATION_RULES:
        raise ScoringError(f"Regla de agregación desconocida: {rule}")
    if rule == "mean":
        return blended.mean(axis=1)
    if rule == "max":
        return blended.max(axis=1)
    if rule == "topk":
        D = blended.shape[1]
        if not 1 <= k <= D:
            raise ScoringError(f"k={k} inválido para topk con D={D}")
        return np.sort(blended, axis=1)[:, -k:].mean(axis=1)


def score_stream(blocks, frame, cfg, S=None, seed=None, gamma=0.0, workers=1):
    """ScoreSeries completa sobre una serie escalada con el escalado de entrenamiento"""
    S = S or blocks[0].cfg.S
    seed = cfg.seed if seed is None else seed
    timestamps, causal, aux = score_targets(blocks, frame, S, seed, cfg.batch_size, workers)
    series = ScoreSeries(timestamps, causal, aux, np.zeros(len(timestamps)), gamma, cfg.aggregation, cfg.topk)
    return with_gamma(series, gamma, cfg.aggregation, cfg.topk)


def with_gamma(series, gamma, rule=None, k=None):
    """Misma serie con S_t recalculada para otro gamma (u otra agregación)"""
    rule = series.rule if rule is None else rule
    k = series.k if k is None else k
    aggregated = aggregate(blend(series.causal, series.aux, gamma), rule, k)
    return ScoreSeries(series.timestamps, series.causal, series.aux, aggregated, gamma, rule, k)


def save_scores(path, series):
    """CSV `t, S_t, s_c_0.., s_o_0..`"""
    D = series.D
    data = {"t": series.timestamps, "S_t": series.aggregated}
    for i in range(D):
        data[f"s_c_{i}"] = series.causal[:, i]
    for i in range(D):
        data[f"s_o_{i}"] = series.aux[:, i]
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.17g")


def load_scores(path, gamma=0.0, rule="mean", k=1):
    if not os.path.exists(path):
        raise ScoringError(f"No existe el archivo de puntajes: {path}")
    df = pd.read_csv(path)
    causal_cols = [c for c in df.columns if c.startswith("s_c_")]
    aux_cols = [c for c in df.columns if c.startswith("s_o_")]
    if "t" not in df.columns or "S_t" not in df.columns or len(causal_cols) != len(aux_cols):
        raise ScoringError(f"Archivo de puntajes mal formado: {path}")
    return ScoreSeries(
        timestamps=df["t"].to_numpy(dtype=np.int64),
        causal=df[causal_cols].to_numpy(dtype=np.float64),
        aux=df[aux_cols].to_numpy(dtype=np.float64),
        aggregated=df["S_t"].to_numpy(dtype=np.float64),
        gamma_used=gamma,
        rule=rule,
        k=k,
    )
