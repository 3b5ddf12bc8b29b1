"""
Comandos del modelo: entrenamiento de los bloques y puntuación del flujo de prueba
"""

import logging
import os

import click

from cgt.commands.common import (
    build_context,
    config_options,
    load_training_splits,
    resolve_model_config,
    run_stage,
)
from cgt.config.storage import load_checkpoint, require_artifact, save_checkpoint
from cgt.services.causal_graph import load_edge_list
from cgt.services.data_pipeline import apply_minmax, load_scaler, load_series
from cgt.services.safety_gate import calibration_prefix, compute_safety, write_safety
from cgt.services.scoring import save_scores, score_stream
from cgt.services.training import train_all, write_training_log

logger = logging.getLogger(__name__)


def load_model(cfg, paths):
    """(bloques, ModelConfig, escalado) desde los artefactos de la corrida"""
    scaler = load_scaler(require_artifact(paths.scaler, "archivo de escalado"))
    model_cfg = resolve_model_config(cfg, scaler.D)
    require_artifact(os.path.join(paths.checkpoint, "manifest"), "checkpoint")
    blocks, model_cfg = load_checkpoint(paths.checkpoint, model_cfg)
    return blocks, model_cfg, scaler


def run_train(cfg, paths, workers=1):
    scaler = load_scaler(require_artifact(paths.scaler, "archivo de escalado"))
    graph = load_edge_list(require_artifact(paths.graph, "grafo causal"))
    train_raw, _ = load_training_splits(cfg)
    train = apply_minmax(train_raw, scaler)
    model_cfg = resolve_model_config(cfg, train.D)

    blocks, histories = train_all(train, graph, model_cfg, cfg.train, workers=workers)
    save_checkpoint(paths.checkpoint, blocks, model_cfg)
    write_training_log(paths.train_log, histories)
    return blocks


def run_score(cfg, paths, workers=1):
    """Compuerta de seguridad sobre el prefijo de calibración y puntajes con gamma_used"""
    blocks, model_cfg, scaler = load_model(cfg, paths)
    test = apply_minmax(load_series(cfg.data.test_path, cfg.data.has_header), scaler)

    calib = calibration_prefix(
        test, model_cfg.W, model_cfg.tau_max, cfg.safety.calib_frac, cfg.safety.calib_min
    )
    diag = compute_safety(blocks, calib, cfg.scoring, cfg.safety, cfg.train.gamma, workers=workers)
    write_safety(paths.safety, diag, paths.safety_report)

    series = score_stream(blocks, test, cfg.scoring, gamma=diag.gamma_used, workers=workers)
    save_scores(paths.scores, series)

    # línea base nominal para la atribución por z-score
    _, val_raw = load_training_splits(cfg)
    val_series = score_stream(
        blocks, apply_minmax(val_raw, scaler), cfg.scoring, gamma=diag.gamma_used, workers=workers
    )
    save_scores(paths.val_scores, val_series)
    return series, diag


@click.command("train")
@config_options
def train_command(config_path, workers, seed):
    """
    cgt train
    Entrena un bloque por objetivo y guarda el checkpoint
    """
    cfg, paths, workers = build_context(config_path, workers, seed)
    with run_stage("train"):
        run_train(cfg, paths, workers)
    click.echo(f"Checkpoint guardado en {paths.checkpoint}")


@click.command("score")
@config_options
def score_command(config_path, workers, seed):
    """
    cgt score
    Elige gamma_used y puntua la serie de prueba
    """
    cfg, paths, workers = build_context(config_path, workers, seed)
    with run_stage("score"):
        series, diag = run_score(cfg, paths, workers)
    click.echo(f"{len(series)} puntajes con gamma_used={diag.gamma_used:.6g} en {paths.scores}")
