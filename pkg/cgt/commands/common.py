"""
Utilidades compartidas por los comandos
Carga de configuración, opciones comunes y conversión de errores a códigos de salida
"""

import dataclasses
import functools
import logging
import os
from contextlib import contextmanager

import click

from cgt.config.config import Config, load_config
from cgt.config.storage import ArtifactPaths
from cgt.errors import CGTError, ConfigError
from cgt.services.data_pipeline import load_series, split_frame

logger = logging.getLogger(__name__)


class StageFailed(click.ClickException):
    """Error de una etapa con su código de salida propio"""

    def __init__(self, error):
        super().__init__(str(error))
        self.exit_code = error.exit_code


@contextmanager
def run_stage(name):
    """Ejecuta una etapa; un CGTError termina el comando con el código de esa etapa"""
    logger.info(f"Etapa {name}: inicio")
    try:
        yield
    except CGTError as e:
        logger.error(f"Etapa {name} fallida: {e}")
        raise StageFailed(e)
    logger.info(f"Etapa {name}: completa")


def config_options(func):
    """--config, --workers y --seed para todos los comandos del pipeline"""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="Archivo sección.clave=valor (por defecto CGT_CONFIG)")
    @click.option("--workers", type=int, default=None, help="Workers para paralelizar por objetivo")
    @click.option("--seed", type=int, default=None, help="Semilla de entrenamiento y puntuación")
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    return wrapper


def spot_options(func):
    @click.option("--q", "q", type=float, default=None, help="Riesgo q del umbral SPOT")
    @click.option("--level", type=float, default=None, help="Cuantil inicial de SPOT")
    @click.option("--lambda-thr", "lambda_thr", type=float, default=None, help="Factor de calibración")
    @click.option("--burn-frac", "burn_frac", type=float, default=None, help="Fraccion de arranque")
    @click.option("--burn-min", "burn_min", type=int, default=None, help="Minimo de puntos de arranque")
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    return wrapper


def build_context(config_path=None, workers=None, seed=None, **extra):
    """Devuelve (configuración, rutas de artefactos, workers)"""
    overrides = {"run.workers": workers}
    if seed is not None:
        overrides["train.seed"] = seed
        overrides["scoring.seed"] = seed
    for key in ("q", "level", "lambda_thr", "burn_frac", "burn_min"):
        if extra.get(key) is not None:
            overrides[f"spot.{key}"] = extra[key]

    with run_stage("config"):
        cfg = load_config(config_path or Config.CONFIG_PATH, overrides=overrides)
    paths = ArtifactPaths(cfg.paths.artifacts_dir).ensure()
    return cfg, paths, cfg.run.workers


def load_training_splits(cfg):
    """(entrenamiento, validación) crudos; sin archivo de validación se separa el final"""
    train = load_series(cfg.data.train_path, cfg.data.has_header)
    if cfg.data.val_path and os.path.exists(cfg.data.val_path):
        val = load_series(cfg.data.val_path, cfg.data.has_header)
        return train, val
    logger.info(f"Sin archivo de validación: se usa el {100 * cfg.data.val_fraction:.0f}% final")
    return split_frame(train, cfg.data.val_fraction)


def resolve_model_config(cfg, D):
    """ModelConfig con D tomado de los datos (model.D=0 significa inferirlo)"""
    if cfg.model.D not in (0, D):
        raise ConfigError(f"model.D={cfg.model.D} no coincide con los datos (D={D})")
    if cfg.scoring.aggregation == "topk" and cfg.scoring.topk > D:
        raise ConfigError(f"scoring.topk={cfg.scoring.topk} mayor que D={D}")
    return dataclasses.replace(cfg.model, D=D)
