"""
Script para reproducir la evaluación multi-entidad
Cada subdirectorio de DATA_ROOT es una entidad con train.csv, test.csv, labels.csv
(opcionales: val.csv, gt_causes.csv). Ejecuta `pipeline` por entidad y agrupa las métricas
"""

import dataclasses
import logging
import os

import click

from cgt.commands.common import build_context
from cgt.commands.pipeline_commands import run_pipeline
from cgt.config.storage import ArtifactPaths
from cgt.services.evaluation import (
    align_labels,
    load_labels,
    pooled_and_entity_reports,
    write_entity_metrics,
    write_metrics,
)
from cgt.services.scoring import load_scores
from cgt.services.thresholding import load_threshold_trace

logger = logging.getLogger(__name__)


def entity_config(cfg, data_dir, out_dir):
    def path(name):
        full = os.path.join(data_dir, name)
        return full if os.path.exists(full) else ""

    data = dataclasses.replace(
        cfg.data,
        train_path=path("train.csv"),
        val_path=path("val.csv"),
        test_path=path("test.csv"),
        labels_path=path("labels.csv"),
        gt_causes_path=path("gt_causes.csv"),
        gt_graph_path=path("graph.csv"),
    )
    return dataclasses.replace(cfg, data=data, paths=dataclasses.replace(cfg.paths, artifacts_dir=out_dir))


@click.command()
@click.argument("data_root", type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", default=None, help="Configuración base del pipeline")
@click.option("--out", "out_root", default="artifacts/entities", help="Directorio de salida")
@click.option("--workers", type=int, default=None)
def main(data_root, config_path, out_root, workers):
    logging.basicConfig(level="INFO", format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    base_cfg, _, workers = build_context(config_path, workers)

    entities = sorted(
        name for name in os.listdir(data_root) if os.path.isdir(os.path.join(data_root, name))
    )
    if not entities:
        raise click.ClickException(f"No hay entidades en {data_root}")

    decisions, rows = [], []
    for name in entities:
        cfg = entity_config(base_cfg, os.path.join(data_root, name), os.path.join(out_root, name))
        paths = ArtifactPaths(cfg.paths.artifacts_dir).ensure()
        metrics = run_pipeline(cfg, paths, workers)

        series = load_scores(paths.scores)
        trace = load_threshold_trace(paths.threshold)
        labels = align_labels(load_labels(cfg.data.labels_path), series.timestamps, int(series.timestamps[-1]) + 1)
        decisions.append((trace.decisions, labels))
        rows.append({"entity": name, **metrics})

    pooled, per_entity, mean_f1 = pooled_and_entity_reports(decisions, adjusted=True)
    for row, report in zip(rows, per_entity):
        row["entity_f1"] = report.f1
    write_entity_metrics(ArtifactPaths(out_root).entity_metrics, rows)
    write_metrics(
        os.path.join(out_root, "metrics_pooled.txt"),
        {
            "pooled.precision": pooled.precision,
            "pooled.recall": pooled.recall,
            "pooled.f1": pooled.f1,
            "entity_mean.f1": mean_f1,
            "n_entities": len(entities),
        },
    )

    print("=" * 60)
    print("EVALUACION MULTI-ENTIDAD")
    print("=" * 60)
    print(f"Entidades:          {len(entities)}")
    print(f"F1 agrupado:        {pooled.f1:.4f}  (P={pooled.precision:.4f} R={pooled.recall:.4f})")
    print(f"F1 medio (entidad): {mean_f1:.4f}")
    print("=" * 60)


if __name__ == "__main__":
    main()
