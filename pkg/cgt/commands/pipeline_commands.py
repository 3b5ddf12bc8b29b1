"""
Comandos de orquestación: pipeline completo y estado de los artefactos
"""

import logging

import click

from cgt.commands.attribution_commands import run_attribute
from cgt.commands.common import build_context, config_options, run_stage, spot_options
from cgt.commands.data_commands import run_discover
from cgt.commands.detection_commands import run_evaluate, run_threshold
from cgt.commands.model_commands import run_score, run_train
from cgt.config.config import Config
from cgt.config.storage import ArtifactPaths, artifact_status

logger = logging.getLogger(__name__)


def run_pipeline(cfg, paths, workers=1, graph_path=None):
    """discover -> train -> score -> threshold -> attribute -> evaluate"""
    with run_stage("discover"):
        run_discover(cfg, paths, workers, graph_path)
    with run_stage("train"):
        run_train(cfg, paths, workers)
    with run_stage("score"):
        run_score(cfg, paths, workers)
    with run_stage("threshold"):
        run_threshold(cfg, paths)
    with run_stage("attribute"):
        run_attribute(cfg, paths, workers)
    with run_stage("evaluate"):
        return run_evaluate(cfg, paths)


@click.command("pipeline")
@config_options
@spot_options
@click.option("--graph", "graph_path", type=click.Path(dir_okay=False), default=None,
              help="Lista de aristas a usar en lugar del descubrimiento")
def pipeline_command(config_path, workers, seed, graph_path, **spot):
    """
    cgt pipeline
    Ejecuta todas las etapas en orden; falla con el código de la primera etapa que falle
    """
    cfg, paths, workers = build_context(config_path, workers, seed, **spot)
    metrics = run_pipeline(cfg, paths, workers, graph_path)
    click.echo("=" * 60)
    click.echo("RESULTADOS")
    click.echo("=" * 60)
    for key, value in metrics.items():
        click.echo(f"{key}={value}")
    click.echo("=" * 60)


@click.command("check")
@click.option("--artifacts-dir", type=click.Path(file_okay=False), default=None,
              help="Directorio de artefactos (por defecto CGT_ARTIFACTS_DIR)")
@click.pass_context
def check_command(ctx, artifacts_dir):
    """
    cgt check
    Verifica los artefactos de una corrida (HEALTHY / DEGRADED / UNHEALTHY)
    """
    paths = ArtifactPaths(artifacts_dir or Config.ARTIFACTS_DIR)
    status, detail = artifact_status(paths)
    click.echo(f"status={status}")
    for name, present in detail.items():
        click.echo(f"{name}={'OK' if present else 'FALTA'}")
    if status != "HEALTHY":
        ctx.exit(1)
