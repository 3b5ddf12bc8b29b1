"""
Comandos de datos: banco sintético y preparación (escalado, medianas, grafo)
"""

import dataclasses
import logging

import click

from cgt.commands.common import build_context, config_options, load_training_splits, run_stage
from cgt.config.config import dump_config
from cgt.services.causal_graph import check_graph, discover_pcmci_lite, load_edge_list, save_edge_list
from cgt.services.data_pipeline import apply_minmax, fit_minmax, save_medians, save_scaler, training_medians
from cgt.services.synthetic_bench import write_bench

logger = logging.getLogger(__name__)


def run_discover(cfg, paths, workers=1, graph_path=None):
    """Ajusta el escalado sobre entrenamiento y obtiene el grafo (archivo o descubrimiento)"""
    train_raw, _ = load_training_splits(cfg)
    scaler = fit_minmax(train_raw, cfg.data.epsilon)
    save_scaler(paths.scaler, scaler)
    save_medians(paths.medians, training_medians(train_raw))
    dump_config(cfg, paths.config)

    tau_max = cfg.model.tau_max
    source = graph_path or cfg.graph.graph_path
    if source:
        graph = load_edge_list(source, D=train_raw.D, tau_max=tau_max)
        check_graph(graph, train_raw.D, tau_max)
    else:
        train = apply_minmax(train_raw, scaler)
        graph = discover_pcmci_lite(
            train, tau_max, cfg.graph.alpha_level, cfg.graph.max_cond, workers=workers
        )
    save_edge_list(paths.graph, graph)
    return graph


@click.command("synth")
@config_options
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Directorio de salida")
def synth_command(config_path, workers, seed, out_dir):
    """
    cgt synth
    Genera el banco sintético (series, etiquetas, grafo, causas y cgt.cfg)
    """
    cfg, _, _ = build_context(config_path, workers)
    if seed is not None:
        cfg = dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth, seed=seed))
    with run_stage("synth"):
        files = write_bench(cfg, out_dir)
    click.echo(f"Banco sintético listo; configuración en {files['config']}")


@click.command("discover")
@config_options
@click.option("--graph", "graph_path", type=click.Path(dir_okay=False), default=None,
              help="Lista de aristas a usar en lugar del descubrimiento")
def discover_command(config_path, workers, seed, graph_path):
    """
    cgt discover
    Escalado Min-Max, medianas de entrenamiento y grafo causal con rezagos
    """
    cfg, paths, workers = build_context(config_path, workers, seed)
    with run_stage("discover"):
        graph = run_discover(cfg, paths, workers, graph_path)
    click.echo(f"Grafo con {len(graph)} aristas guardado en {paths.graph}")
