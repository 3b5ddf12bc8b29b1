"""
Comando de atribución de causa raíz sobre los eventos detectados
"""

import logging
import os

import click

from cgt.commands.common import build_context, config_options, run_stage
from cgt.commands.model_commands import load_model
from cgt.config.storage import require_artifact
from cgt.services.attribution import (
    METHODS,
    baseline_statistics,
    clamp_deltas,
    events_from_decisions,
    rank_root_causes,
    save_attribution_report,
    zscore_matrix,
)
from cgt.services.data_pipeline import apply_minmax, load_medians, load_series
from cgt.services.evaluation import load_gt_causes
from cgt.services.safety_gate import load_gamma_used
from cgt.services.scoring import blend, load_scores
from cgt.services.thresholding import load_threshold_trace

logger = logging.getLogger(__name__)


def _rank_all(events, matrices, timestamps, event_ids=None):
    results = []
    for method in METHODS:
        results.extend(rank_root_causes(method, events, matrices[method], timestamps, event_ids))
    return results


def run_attribute(cfg, paths, workers=1):
    """
    Rankings por evento detectado con ambos métodos
    Con causas verdaderas disponibles también se rankean los segmentos verdaderos
    """
    blocks, _, scaler = load_model(cfg, paths)
    medians = load_medians(require_artifact(paths.medians, "archivo de medianas"))
    gamma_used, _ = load_gamma_used(require_artifact(paths.safety, "diagnóstico de seguridad"))
    rule, k = cfg.scoring.aggregation, cfg.scoring.topk
    base = load_scores(require_artifact(paths.scores, "archivo de puntajes"), gamma_used, rule, k)
    baseline = load_scores(require_artifact(paths.val_scores, "puntajes de validación"), gamma_used, rule, k)
    trace = load_threshold_trace(require_artifact(paths.threshold, "traza de umbrales"))

    test_raw = load_series(cfg.data.test_path, cfg.data.has_header)
    test = apply_minmax(test_raw, scaler)

    att = cfg.attribution
    mu, sigma = baseline_statistics(
        blend(baseline.causal, baseline.aux, gamma_used), att.epsilon, att.min_baseline
    )
    matrices = {
        "zscore": zscore_matrix(base, gamma_used, mu, sigma, att.epsilon),
        "clamp": clamp_deltas(
            blocks, test, test_raw, scaler, medians, gamma_used, base, cfg.scoring,
            gate_threshold=att.gate_threshold, workers=workers,
        ),
    }

    events = events_from_decisions(trace.decisions, trace.timestamps)
    if events:
        results = _rank_all(events, matrices, base.timestamps)
    else:
        logger.warning("No hay eventos detectados para atribuir")
        results = []
    save_attribution_report(paths.attribution, results)

    if os.path.exists(cfg.data.gt_causes_path):
        first, last = int(base.timestamps[0]), int(base.timestamps[-1])
        gt_events = [
            e for e in load_gt_causes(cfg.data.gt_causes_path) if e["end"] >= first and e["start"] <= last
        ]
        if gt_events:
            segments = [(max(e["start"], first), min(e["end"], last)) for e in gt_events]
            ids = [e["event_id"] for e in gt_events]
            save_attribution_report(paths.gt_attribution, _rank_all(segments, matrices, base.timestamps, ids))
    return results


@click.command("attribute")
@config_options
def attribute_command(config_path, workers, seed):
    """
    cgt attribute
    Ranking de sensores por z-score y por fijado contrafactual
    """
    cfg, paths, workers = build_context(config_path, workers, seed)
    with run_stage("attribute"):
        results = run_attribute(cfg, paths, workers)
    n_events = len({r.event_id for r in results})
    click.echo(f"{n_events} eventos atribuidos; reporte en {paths.attribution}")
    if results:
        top = [r.sensors[0] for r in results if r.method == cfg.attribution.method]
        click.echo(f"Sensor principal por evento ({cfg.attribution.method}): {top}")
