"""
Atribución de causa raíz
(a) NLL mezclada por dimensión estandarizada contra una línea base nominal
(b) fijado contrafactual de un sensor a su mediana de entrenamiento, recalculando
    solo los bloques que lo usan
La atribución es del modelo: no equivale a una intervención física sobre el proceso
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from cgt.errors import AttributionError
from cgt.models.report import AttributionResult
from cgt.services.data_pipeline import apply_minmax
from cgt.services.scoring import aggregate, blend, score_blocks
from cgt.services.thresholding import label_segments

logger = logging.getLogger(__name__)

METHODS = ("zscore", "clamp")


def _ranking(scores, descending):
    """Orden de sensores por puntaje; empates por índice ascendente"""
    scores = np.asarray(scores, dtype=np.float64)
    keys = -scores if descending else scores
    order = np.lexsort((np.arange(len(scores)), keys))
    return [(int(j), float(scores[j])) for j in order]


# ---------------------------------------------------------------------------
# z-score
# ---------------------------------------------------------------------------


def baseline_statistics(baseline_blended, epsilon=1e-8, min_baseline=30):
    """(mu_i, sigma_i) por dimensión sobre la línea base"""
    baseline_blended = np.asarray(baseline_blended, dtype=np.float64)
    n = baseline_blended.shape[0]
    if n < 2:
        raise AttributionError(f"La línea base necesita al menos 2 puntos (hay {n})")
    if n < min_baseline:
        logger.warning(f"Línea base corta: {n} puntos (< {min_baseline})")
    return baseline_blended.mean(axis=0), baseline_blended.std(axis=0, ddof=1)


def zscore_matrix(series, gamma_used, mu, sigma, epsilon=1e-8):
    """Z_{t,i} = (A_{t,i} - mu_i) / (sigma_i + eps) para toda la serie"""
    A = blend(series.causal, series.aux, gamma_used)
    return (A - mu) / (sigma + epsilon)


def zscore_attribution(
    series,
    gamma_used,
    times,
    baseline=None,
    baseline_range=None,
    epsilon=1e-8,
    min_baseline=30,
):
    """
    Ranking por instante con Z descendente
    La línea base es otra ScoreSeries (validación) o un rango (inicio, fin) de la misma serie
    """
    if baseline is None and baseline_range is None:
        raise AttributionError("Se necesita una línea base (serie o rango)")
    times = [int(t) for t in times]

    if baseline is not None:
        A_base = blend(baseline.causal, baseline.aux, gamma_used)
    else:
        start, end = baseline_range
        inside = (series.timestamps >= start) & (series.timestamps <= end)
        A_base = blend(series.causal[inside], series.aux[inside], gamma_used)
        overlap = [t for t in times if start <= t <= end]
        if overlap:
            logger.warning(f"La línea base incluye {len(overlap)} instantes consultados")

    mu, sigma = baseline_statistics(A_base, epsilon, min_baseline)
    Z = zscore_matrix(series, gamma_used, mu, sigma, epsilon)
    stats = {i: (float(mu[i]), float(sigma[i])) for i in range(series.D)}

    index = {int(t): r for r, t in enumerate(series.timestamps)}
    results = []
    for t in times:
        if t not in index:
            raise AttributionError(f"El instante {t} no tiene puntaje")
        results.append(
            AttributionResult(
                t=t,
                ranking=_ranking(Z[index[t]], descending=True),
                method="zscore",
                baseline_stats=stats,
            )
        )
    return results


# ---------------------------------------------------------------------------
# Fijado contrafactual
# ---------------------------------------------------------------------------


def clamped_inputs(frame_raw, scaler, medians, s):
    """Serie escalada con el sensor s fijado a su mediana cruda en todos los instantes"""
    if not 0 <= s < frame_raw.D:
        raise AttributionError(f"Sensor {s} fuera de rango (D={frame_raw.D})")
    values = frame_raw.values.copy()
    values[:, s] = medians[s]
    return apply_minmax(frame_raw.with_values(values), scaler)


def affected_blocks(blocks, s, gate_threshold=0.1):
    """Bloques donde s es padre o alguna compuerta sobre sus columnas supera el umbral"""
    affected = []
    for block in blocks:
        tau = block.cfg.tau_max
        columns = slice(s * tau, (s + 1) * tau)
        is_parent = bool(block.parent_bool[columns].any())
        max_gate = float(block.gate()[columns].max())
        if is_parent or max_gate > gate_threshold:
            affected.append(block)
    return affected


def counterfactual_clamp(
    blocks,
    frame,
    frame_raw,
    scaler,
    medians,
    gamma_used,
    s,
    base,
    scoring_cfg,
    gate_threshold=0.1,
    seed=None,
):
    """
    Delta_s(t) = S_t(fijado) - S_t(original) sobre todos los instantes de base
    Los objetivos salen de la serie original; solo cambian las entradas
    """
    D = frame.D
    if not 0 <= s < D:
        raise AttributionError(f"Sensor {s} fuera de rango (D={D})")
    affected = affected_blocks(blocks, s, gate_threshold)
    if not affected:
        return np.zeros(len(base))

    seed = scoring_cfg.seed if seed is None else seed
    clamped = clamped_inputs(frame_raw, scaler, medians, s)
    _, results = score_blocks(
        affected,
        frame,
        blocks[0].cfg.S,
        seed,
        scoring_cfg.batch_size,
        input_frame=clamped,
    )
    causal, aux = base.causal.copy(), base.aux.copy()
    for target, (c, a) in results.items():
        causal[:, target] = c
        aux[:, target] = a

    rule, k = scoring_cfg.aggregation, scoring_cfg.topk
    original = aggregate(blend(base.causal, base.aux, gamma_used), rule, k)
    return aggregate(blend(causal, aux, gamma_used), rule, k) - original


def clamp_deltas(blocks, frame, frame_raw, scaler, medians, gamma_used, base, scoring_cfg,
                 gate_threshold=0.1, sensors=None, workers=1):
    """Matriz T' x D de Delta_s; un worker por sensor, columnas en orden de sensor"""
    sensors = list(range(frame.D)) if sensors is None else list(sensors)

    def run(s):
        return counterfactual_clamp(
            blocks, frame, frame_raw, scaler, medians, gamma_used, s, base, scoring_cfg, gate_threshold
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        columns = list(pool.map(run, sensors))
    logger.info(f"Fijado contrafactual sobre {len(sensors)} sensores")
    return np.column_stack(columns)


# ---------------------------------------------------------------------------
# Eventos
# ---------------------------------------------------------------------------


def events_from_decisions(decisions, timestamps):
    """Segmentos anomalos contiguos como pares (inicio, fin) de instantes"""
    timestamps = np.asarray(timestamps)
    return [(int(timestamps[a]), int(timestamps[b])) for a, b in label_segments(decisions)]


def rank_root_causes(method, events, scores_matrix, timestamps, event_ids=None):
    """
    Un ranking por evento con el puntaje promedio del segmento
    zscore ordena descendente; clamp ordena ascendente (Delta más negativo primero)
    """
    event_ids = list(range(len(events))) if event_ids is None else list(event_ids)
    if method not in METHODS:
        raise AttributionError(f"Método de atribución desconocido: {method}")
    if not events:
        raise AttributionError("Lista de eventos vacía")
    timestamps = np.asarray(timestamps)
    scores_matrix = np.asarray(scores_matrix, dtype=np.float64)

    results = []
    for event_id, (start, end) in zip(event_ids, events):
        inside = (timestamps >= start) & (timestamps <= end)
        if not inside.any():
            raise AttributionError(f"El evento {event_id} [{start}, {end}] no tiene puntajes")
        mean_scores = scores_matrix[inside].mean(axis=0)
        ranking = _ranking(mean_scores, descending=(method == "zscore"))
        results.append(
            AttributionResult(
                t=int(start),
                end=int(end),
                event_id=event_id,
                ranking=ranking,
                method=method,
                deltas={j: v for j, v in ranking} if method == "clamp" else None,
            )
        )
    return results


def save_attribution_report(path, results):
    """CSV `event_id, start, end, rank, sensor, score, method`"""
    rows = []
    for result in results:
        for rank, (sensor, score) in enumerate(result.ranking, start=1):
            rows.append(
                {
                    "event_id": result.event_id,
                    "start": result.start,
                    "end": result.t if result.end is None else result.end,
                    "rank": rank,
                    "sensor": sensor,
                    "score": score,
                    "method": result.method,
                }
            )
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    columns = ["event_id", "start", "end", "rank", "sensor", "score", "method"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.17g")


def load_attribution_report(path):
    """{método: {event_id: [sensores en orden]}}"""
    if not os.path.exists(path):
        raise AttributionError(f"No existe el reporte de atribución: {path}")
    df = pd.read_csv(path).sort_values(["method", "event_id", "rank"])
    rankings = {}
    for (method, event_id), group in df.groupby(["method", "event_id"]):
        rankings.setdefault(method, {})[int(event_id)] = group["sensor"].astype(int).tolist()
    return rankings
