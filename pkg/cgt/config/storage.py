"""
Persistencia de artefactos del pipeline
Checkpoints (manifest + un archivo binario por bloque) y archivos clave=valor
"""

import logging
import os
import zlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from dotenv import dotenv_values

from cgt.errors import ArtifactError, CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cgt-checkpoint"
CHECKPOINT_VERSION = 1

# dtype del modelo -> dtype numpy little-endian en disco
_DISK_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass(frozen=True)
class ArtifactPaths:
    """Ubicacion de cada artefacto dentro del directorio de trabajo"""

    root: str

    def _join(self, name):
        return os.path.join(self.root, name)

    @property
    def config(self):
        return self._join("config.txt")

    @property
    def scaler(self):
        return self._join("scaler.txt")

    @property
    def medians(self):
        return self._join("medians.txt")

    @property
    def graph(self):
        return self._join("graph.csv")

    @property
    def checkpoint(self):
        return self._join("checkpoint")

    @property
    def train_log(self):
        return self._join("train_log.csv")

    @property
    def scores(self):
        return self._join("scores.csv")

    @property
    def val_scores(self):
        return self._join("val_scores.csv")

    @property
    def safety(self):
        return self._join("safety.txt")

    @property
    def safety_report(self):
        return self._join("safety_report.txt")

    @property
    def threshold(self):
        return self._join("threshold.csv")

    @property
    def attribution(self):
        return self._join("attribution.csv")

    @property
    def gt_attribution(self):
        """Rankings sobre los segmentos verdaderos (entrada de las métricas de atribución)"""
        return self._join("attribution_gt.csv")

    @property
    def metrics(self):
        return self._join("metrics.txt")

    @property
    def entity_metrics(self):
        return self._join("metrics_entities.csv")

    @property
    def ablation(self):
        return self._join("ablation.csv")

    def ensure(self):
        os.makedirs(self.root, exist_ok=True)
        return self

    def required(self):
        """Artefactos que deja una corrida completa de `pipeline`"""
        return {
            "scaler": self.scaler,
            "graph": self.graph,
            "checkpoint": os.path.join(self.checkpoint, "manifest"),
            "scores": self.scores,
            "safety": self.safety,
            "threshold": self.threshold,
            "attribution": self.attribution,
            "metrics": self.metrics,
        }


def format_value(value):
    """Floats con 17 cifras significativas (ida y vuelta exacta)"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_key_values(path, mapping):
    """Escribir un archivo `clave=valor` (una línea por clave, en orden)"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={format_value(value)}\n")


def read_key_values(path, what="archivo"):
    """Leer un archivo `clave=valor` escrito por write_key_values"""
    if not os.path.exists(path):
        raise ArtifactError(f"Falta el {what}: {path}")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def require_artifact(path, what):
    """Precondicion de los comandos: el artefacto de la etapa anterior debe existir"""
    if not os.path.exists(path):
        raise ArtifactError(f"Falta el {what} ({path}); ejecute primero la etapa que lo genera")
    return path


def artifact_status(paths):
    """
    Estado de los artefactos de una corrida
    Devuelve (HEALTHY | DEGRADED | UNHEALTHY, detalle por artefacto)
    """
    detail = {name: os.path.exists(path) for name, path in paths.required().items()}
    present = sum(detail.values())
    if present == len(detail):
        status = "HEALTHY"
    elif present == 0:
        status = "UNHEALTHY"
    else:
        status = "DEGRADED"
    return status, detail


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _shape_text(shape):
    return "x".join(str(s) for s in shape)


def _parse_shape(text):
    return tuple(int(s) for s in text.split("x")) if text else ()


def save_checkpoint(directory, blocks, model_cfg):
    """
    Guardar todos los bloques: `manifest` + `block_<i>.bin`
    Cada parámetro se escribe en orden row-major little-endian con su CRC32
    """
    disk_dtype = _DISK_DTYPES[model_cfg.dtype]
    os.makedirs(directory, exist_ok=True)

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": model_cfg.dtype,
        "n_blocks": len(blocks),
    }
    for key, value in asdict(model_cfg).items():
        manifest[f"model.{key}"] = value

    for i, block in enumerate(blocks):
        manifest[f"block.{i}.target"] = block.target
        chunks = []
        offset = 0
        for name, tensor in block.state_dict().items():
            array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=disk_dtype)
            data = array.tobytes()
            manifest[f"param.{i}.{name}"] = (
                f"{_shape_text(tensor.shape)}|{offset}|{len(data)}|{zlib.crc32(data)}"
            )
            chunks.append(data)
            offset += len(data)
        with open(os.path.join(directory, f"block_{i}.bin"), "wb") as fh:
            fh.write(b"".join(chunks))

    write_key_values(os.path.join(directory, "manifest"), manifest)
    logger.info(f"Checkpoint guardado en {directory} ({len(blocks)} bloques, {model_cfg.dtype})")


def read_manifest(directory):
    manifest_path = os.path.join(directory, "manifest")
    if not os.path.exists(manifest_path):
        raise ArtifactError(f"No existe checkpoint en {directory}; ejecute primero `train`")
    manifest = read_key_values(manifest_path, "manifest del checkpoint")

    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Formato de checkpoint desconocido: {manifest.get('format')}")
    try:
        version = int(manifest.get("version", "-1"))
    except ValueError:
        raise CheckpointError(f"Versión de checkpoint ilegible: {manifest.get('version')}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Versión de checkpoint {version} no soportada (se espera {CHECKPOINT_VERSION}) "
            "y no hay migracion disponible"
        )
    return manifest


def load_checkpoint(directory, expected_model_cfg=None):
    """
    Cargar los bloques de un checkpoint
    Verifica versión, forma, tamaño y CRC32 de cada parámetro
    """
    from cgt.config.config import model_config_from_mapping
    from cgt.models.block import ForecastBlock

    manifest = read_manifest(directory)
    model_cfg = model_config_from_mapping(
        {k[len("model."):]: v for k, v in manifest.items() if k.startswith("model.")}
    )
    if expected_model_cfg is not None and asdict(expected_model_cfg) != asdict(model_cfg):
        raise CheckpointError(
            "La configuración del modelo no coincide con la del checkpoint: "
            f"{asdict(expected_model_cfg)} != {asdict(model_cfg)}"
        )

    disk_dtype = _DISK_DTYPES[manifest["dtype"]]
    n_blocks = int(manifest["n_blocks"])
    blocks = []
    for i in range(n_blocks):
        target = int(manifest[f"block.{i}.target"])
        block = ForecastBlock(model_cfg, target, np.zeros(model_cfg.P), seed=0)
        path = os.path.join(directory, f"block_{i}.bin")
        if not os.path.exists(path):
            raise CheckpointError(f"Falta el archivo del bloque {i}: {path}")
        with open(path, "rb") as fh:
            raw = fh.read()

        expected_names = set(block.state_dict().keys())
        stored_names = {k.split(".", 2)[2] for k in manifest if k.startswith(f"param.{i}.")}
        if expected_names != stored_names:
            missing = sorted(expected_names - stored_names)
            extra = sorted(stored_names - expected_names)
            raise CheckpointError(
                f"Parámetros del bloque {i} no coinciden (faltan {missing}, sobran {extra})"
            )

        state = {}
        for name, reference in block.state_dict().items():
            shape_text, offset, nbytes, crc = manifest[f"param.{i}.{name}"].split("|")
            shape = _parse_shape(shape_text)
            offset, nbytes, crc = int(offset), int(nbytes), int(crc)
            if shape != tuple(reference.shape):
                raise CheckpointError(
                    f"Forma distinta para {i}.{name}: {shape} != {tuple(reference.shape)}"
                )
            if offset + nbytes > len(raw):
                raise CheckpointError(f"Archivo truncado: el parámetro {i}.{name} queda incompleto")
            chunk = raw[offset : offset + nbytes]
            if zlib.crc32(chunk) != crc:
                raise CheckpointError(f"CRC32 no coincide para el parámetro {i}.{name}")
            array = np.frombuffer(chunk, dtype=disk_dtype).reshape(shape)
            state[name] = torch.from_numpy(array.copy())
        block.load_state_dict(state, strict=True)
        block.eval()
        blocks.append(block)

    logger.info(f"Checkpoint cargado desde {directory} ({n_blocks} bloques)")
    return blocks, model_cfg
