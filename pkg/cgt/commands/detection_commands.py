"""
Comandos de detección: umbral SPOT, evaluación y ablación de la mezcla
"""

import logging
import os

import click
import pandas as pd

from cgt.commands.common import build_context, config_options, run_stage, spot_options
from cgt.config.storage import require_artifact
from cgt.errors import EvaluationError
from cgt.services.attribution import load_attribution_report
from cgt.services.causal_graph import graph_scores, load_edge_list
from cgt.services.evaluation import (
    align_labels,
    attribution_metrics,
    auroc,
    detection_mapping,
    detection_metrics,
    load_gt_causes,
    load_labels,
    pr_auc,
    top1_rate,
    write_metrics,
)
from cgt.services.safety_gate import load_gamma_used
from cgt.services.scoring import load_scores, with_gamma
from cgt.services.thresholding import load_threshold_trace, run_spot, save_threshold_trace

logger = logging.getLogger(__name__)


def _spot(series, spot_cfg):
    return run_spot(
        series.aggregated,
        series.timestamps,
        q=spot_cfg.q,
        level=spot_cfg.level,
        lambda_thr=spot_cfg.lambda_thr,
        burn_frac=spot_cfg.burn_frac,
        burn_min=spot_cfg.burn_min,
    )


def _scored_labels(cfg, series):
    labels = load_labels(cfg.data.labels_path)
    return align_labels(labels, series.timestamps, int(series.timestamps[-1]) + 1)


def run_threshold(cfg, paths):
    series = load_scores(require_artifact(paths.scores, "archivo de puntajes"))
    trace = _spot(series, cfg.spot)
    save_threshold_trace(paths.threshold, trace)
    return trace


def run_evaluate(cfg, paths):
    """Métricas de detección y, si hay causas verdaderas, de atribución y de grafo"""
    series = load_scores(require_artifact(paths.scores, "archivo de puntajes"))
    trace = load_threshold_trace(require_artifact(paths.threshold, "traza de umbrales"))
    if len(trace) != len(series):
        raise EvaluationError(f"Umbrales ({len(trace)}) y puntajes ({len(series)}) con largos distintos")
    y = _scored_labels(cfg, series)

    raw = detection_metrics(trace.decisions, y, adjusted=False)
    adjusted = detection_metrics(trace.decisions, y, adjusted=True)
    metrics = {**detection_mapping("raw", raw), **detection_mapping("adjusted", adjusted)}
    metrics["auroc"] = auroc(series.aggregated, y)
    metrics["pr_auc"] = pr_auc(series.aggregated, y)

    if os.path.exists(cfg.data.gt_causes_path) and os.path.exists(paths.gt_attribution):
        gt = {e["event_id"]: e["causes"] for e in load_gt_causes(cfg.data.gt_causes_path)}
        rankings = load_attribution_report(paths.gt_attribution)
        for method, ranked in rankings.items():
            events = {e: gt[e] for e in ranked if e in gt}
            if not events:
                continue
            report = attribution_metrics(ranked, events, series.D, cfg.attribution.percentages)
            for key, value in report.to_dict().items():
                metrics[f"{method}.{key}"] = value
            metrics[f"{method}.top1"] = top1_rate(ranked, events)

    if cfg.data.gt_graph_path and os.path.exists(cfg.data.gt_graph_path):
        precision, recall = graph_scores(
            load_edge_list(paths.graph), load_edge_list(cfg.data.gt_graph_path)
        )
        metrics["graph.precision"] = precision
        metrics["graph.recall"] = recall

    write_metrics(paths.metrics, metrics)
    return metrics


def run_ablation(cfg, paths):
    """A0 (solo causal), A1 (gamma base) y A2 (gamma_used) con el mismo umbral SPOT"""
    gamma_used, gamma_base = load_gamma_used(require_artifact(paths.safety, "diagnóstico de seguridad"))
    series = load_scores(require_artifact(paths.scores, "archivo de puntajes"))
    y = _scored_labels(cfg, series)
    rule, k = cfg.scoring.aggregation, cfg.scoring.topk

    rows = []
    for variant, gamma in (("A0", 0.0), ("A1", gamma_base), ("A2", gamma_used)):
        scored = with_gamma(series, gamma, rule, k)
        trace = _spot(scored, cfg.spot)
        report = detection_metrics(trace.decisions, y, adjusted=True)
        rows.append(
            {
                "variant": variant,
                "gamma": gamma,
                "precision": report.precision,
                "recall": report.recall,
                "f1": report.f1,
                "auroc": auroc(scored.aggregated, y),
            }
        )
        logger.info(f"Ablacion {variant} (gamma={gamma:.6g}): F1 ajustado={report.f1:.4f}")
    pd.DataFrame(rows).to_csv(paths.ablation, index=False, float_format="%.17g")
    return rows


@click.command("threshold")
@config_options
@spot_options
def threshold_command(config_path, workers, seed, **spot):
    """
    cgt threshold
    Umbral dinamico SPOT sobre S_t y decisiones crudas
    """
    cfg, paths, _ = build_context(config_path, workers, seed, **spot)
    with run_stage("threshold"):
        trace = run_threshold(cfg, paths)
    click.echo(f"{int(trace.decisions.sum())} alarmas en {len(trace)} instantes")


@click.command("evaluate")
@config_options
def evaluate_command(config_path, workers, seed):
    """
    cgt evaluate
    Precisión, recall y F1 (crudo y ajustado), AUROC, PR-AUC y métricas de atribución
    """
    cfg, paths, _ = build_context(config_path, workers, seed)
    with run_stage("evaluate"):
        metrics = run_evaluate(cfg, paths)
    for key in ("adjusted.f1", "raw.f1", "auroc"):
        click.echo(f"{key}={metrics[key]:.4f}")


@click.command("ablation")
@config_options
@spot_options
def ablation_command(config_path, workers, seed, **spot):
    """
    cgt ablation
    Compara las variantes de mezcla sobre el mismo checkpoint
    """
    cfg, paths, _ = build_context(config_path, workers, seed, **spot)
    with run_stage("ablation"):
        rows = run_ablation(cfg, paths)
    for row in rows:
        click.echo(f"{row['variant']}: gamma={row['gamma']:.6g} F1={row['f1']:.4f}")
