"""
Métricas de detección (precisión, recall, F1 con ajuste por segmento, AUROC, PR-AUC)
y de atribución (HitRate@P% y NDCG@P%)
"""

import logging
import math
import os

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import average_precision_score, confusion_matrix

from cgt.config.storage import write_key_values
from cgt.errors import EvaluationError
from cgt.models.report import AttributionReport, DetectionReport
from cgt.services.thresholding import label_segments, point_adjust

logger = logging.getLogger(__name__)

DEFAULT_PERCENTAGES = (100, 150)


# ---------------------------------------------------------------------------
# Detección
# ---------------------------------------------------------------------------


def _check_aligned(a, b, what):
    if len(a) != len(b):
        raise EvaluationError(f"Largos distintos en {what}: {len(a)} y {len(b)}")


def detection_metrics(predictions, labels, adjusted=False):
    """Métricas de la matriz de confusión; con adjusted se aplica el ajuste por segmento"""
    predictions = np.asarray(predictions).astype(np.int64)
    labels = np.asarray(labels).astype(np.int64)
    _check_aligned(predictions, labels, "decisiones y etiquetas")
    if adjusted:
        predictions = point_adjust(predictions, label_segments(labels))

    tn, fp, fn, tp = (int(v) for v in confusion_matrix(labels, predictions, labels=[0, 1]).ravel())
    flags = []
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    for flag in flags:
        logger.warning(f"Metrica indefinida reportada como 0: {flag}")

    return DetectionReport(
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        point_adjusted=adjusted,
        flags=flags,
    )


def _two_classes(labels):
    labels = np.asarray(labels).astype(np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise EvaluationError("Las etiquetas tienen una sola clase")
    return labels.astype(bool)


def auroc(scores, labels):
    """U de Mann-Whitney / (n1 n0), con rangos medios para empates"""
    scores = np.asarray(scores, dtype=np.float64)
    _check_aligned(scores, labels, "puntajes y etiquetas")
    positive = _two_classes(labels)
    U = stats.mannwhitneyu(scores[positive], scores[~positive], alternative="two-sided").statistic
    return float(U) / (positive.sum() * (~positive).sum())


def pr_auc(scores, labels):
    """Precisión promedio de los puntajes crudos"""
    scores = np.asarray(scores, dtype=np.float64)
    _check_aligned(scores, labels, "puntajes y etiquetas")
    positive = _two_classes(labels)
    return float(average_precision_score(positive.astype(np.int64), scores))


def pooled_and_entity_reports(entities, adjusted=True):
    """
    entities: lista de (decisiones, etiquetas) por entidad
    Devuelve (reporte agrupado, reportes por entidad, F1 medio entre entidades)
    El ajuste por segmento se hace dentro de cada entidad antes de agrupar
    """
    if not entities:
        raise EvaluationError("No hay entidades para evaluar")
    per_entity, pooled_pred, pooled_labels = [], [], []
    for predictions, labels in entities:
        predictions = np.asarray(predictions).astype(np.int64)
        labels = np.asarray(labels).astype(np.int64)
        _check_aligned(predictions, labels, "decisiones y etiquetas")
        if adjusted:
            predictions = point_adjust(predictions, label_segments(labels))
        per_entity.append(detection_metrics(predictions, labels))
        pooled_pred.append(predictions)
        pooled_labels.append(labels)

    pooled = detection_metrics(np.concatenate(pooled_pred), np.concatenate(pooled_labels))
    pooled.point_adjusted = adjusted
    for report in per_entity:
        report.point_adjusted = adjusted
    mean_f1 = float(np.mean([report.f1 for report in per_entity]))
    return pooled, per_entity, mean_f1


# ---------------------------------------------------------------------------
# Atribución
# ---------------------------------------------------------------------------


def top_k_size(percentage, n_causes, D):
    """k = ceil(P / 100 * |GT|) acotado por D, en aritmetica entera"""
    return min(-(-int(percentage) * n_causes // 100), D)


def hit_rate(ranking, causes, k):
    return len(set(ranking[:k]) & set(causes)) / len(causes)


def ndcg(ranking, causes, k):
    """Ganancias binarias con descuento log2; normalizado por el DCG ideal en |GT|"""
    causes = set(causes)
    dcg = sum(1.0 / math.log2(r + 2) for r, sensor in enumerate(ranking[:k]) if sensor in causes)
    ideal = sum(1.0 / math.log2(r + 2) for r in range(len(causes)))
    return dcg / ideal


def attribution_metrics(rankings, gt_causes, D, percentages=DEFAULT_PERCENTAGES):
    """
    rankings: {evento: [sensores ordenados]}; gt_causes: {evento: causas}
    Promedio macro sobre los eventos con causas no vacias
    """
    per_event, excluded = [], 0
    for event_id in sorted(gt_causes):
        causes = sorted(set(gt_causes[event_id]))
        if not causes:
            logger.warning(f"Evento {event_id} sin causas verdaderas: excluido")
            excluded += 1
            continue
        if event_id not in rankings:
            raise EvaluationError(f"Evento {event_id} sin ranking de atribución")
        ranking = list(rankings[event_id])
        row = {"event_id": event_id, "causes": causes, "top": ranking[: len(causes)]}
        for p in percentages:
            k = top_k_size(p, len(causes), D)
            row[f"hitrate@{p}"] = hit_rate(ranking, causes, k)
            row[f"ndcg@{p}"] = ndcg(ranking, causes, k)
        per_event.append(row)

    if not per_event:
        raise EvaluationError("Ningun evento tiene causas verdaderas")
    return AttributionReport(
        hitrate={p: float(np.mean([row[f"hitrate@{p}"] for row in per_event])) for p in percentages},
        ndcg={p: float(np.mean([row[f"ndcg@{p}"] for row in per_event])) for p in percentages},
        per_event=per_event,
        excluded_events=excluded,
    )


def top1_rate(rankings, gt_causes):
    """Fraccion de eventos cuyo primer sensor pertenece a las causas verdaderas"""
    events = [e for e in sorted(gt_causes) if gt_causes[e] and e in rankings]
    if not events:
        return 0.0
    return float(np.mean([rankings[e][0] in set(gt_causes[e]) for e in events]))


# ---------------------------------------------------------------------------
# Entradas y salidas
# ---------------------------------------------------------------------------


def load_labels(path):
    """Columna `label` (0/1) alineada con las filas de la serie de prueba"""
    if not os.path.exists(path):
        raise EvaluationError(f"No existe el archivo de etiquetas: {path}")
    df = pd.read_csv(path)
    column = "label" if "label" in df.columns else df.columns[-1]
    labels = pd.to_numeric(df[column], errors="coerce")
    if labels.isna().any() or not labels.isin([0, 1]).all():
        raise EvaluationError(f"Etiquetas no binarias en {path}")
    return labels.to_numpy(dtype=np.int64)


def align_labels(labels, timestamps, T):
    """Etiquetas de los instantes puntuados; la serie y las etiquetas deben tener T filas"""
    if len(labels) != T:
        raise EvaluationError(f"Hay {len(labels)} etiquetas para una serie de {T} instantes")
    return np.asarray(labels)[np.asarray(timestamps)]


def load_gt_causes(path):
    """CSV `event_id, start, end, causes` con causas separadas por ';'"""
    if not os.path.exists(path):
        raise EvaluationError(f"No existe el archivo de causas: {path}")
    df = pd.read_csv(path, dtype={"causes": str}, keep_default_na=False)
    missing = {"event_id", "start", "end", "causes"} - set(df.columns)
    if missing:
        raise EvaluationError(f"Archivo de causas sin columnas {sorted(missing)}: {path}")
    events = []
    for row in df.itertuples(index=False):
        causes = [int(c) for c in str(row.causes).split(";") if c.strip()]
        events.append(
            {"event_id": int(row.event_id), "start": int(row.start), "end": int(row.end), "causes": causes}
        )
    return events


def save_gt_causes(path, events):
    rows = [
        {
            "event_id": e["event_id"],
            "start": e["start"],
            "end": e["end"],
            "causes": ";".join(str(c) for c in e["causes"]),
        }
        for e in events
    ]
    pd.DataFrame(rows, columns=["event_id", "start", "end", "causes"]).to_csv(path, index=False)


def detection_mapping(prefix, report):
    return {
        f"{prefix}.precision": report.precision,
        f"{prefix}.recall": report.recall,
        f"{prefix}.f1": report.f1,
        f"{prefix}.tp": report.tp,
        f"{prefix}.fp": report.fp,
        f"{prefix}.fn": report.fn,
        f"{prefix}.tn": report.tn,
    }


def write_metrics(path, mapping):
    write_key_values(path, mapping)
    logger.info(f"Métricas guardadas en {path}")


def write_entity_metrics(path, rows):
    """Una fila por entidad; las columnas salen de las claves de cada fila"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g")
