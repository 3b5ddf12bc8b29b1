"""
Carga de series, escalado Min-Max y matrices de rezagos
Todo el indexado temporal es base 0: el primer instante válido es W + tau_max
"""

import logging
import os

import numpy as np
import pandas as pd

from cgt.config.storage import read_key_values, write_key_values
from cgt.errors import DimensionError, IngestionError
from cgt.models.series import (
    LagDesignMatrix,
    ScalerParams,
    SeriesFrame,
    TargetBatch,
    first_valid_index,
    valid_timestamps,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Lectura / escritura
# ---------------------------------------------------------------------------


def load_series(path, has_header=True):
    """Leer un CSV numérico (filas = instantes, columnas = canales)"""
    if not os.path.exists(path):
        raise IngestionError(f"No existe el archivo de datos: {path}")

    try:
        raw = pd.read_csv(
            path,
            header=0 if has_header else None,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise IngestionError(f"Archivo vacío: {path}")
    except pd.errors.ParserError as e:
        raise IngestionError(f"CSV mal formado en {path}: {e}")

    if raw.empty or raw.shape[1] == 0:
        raise IngestionError(f"El archivo {path} no contiene filas de datos")

    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=np.float64)

    bad = ~np.isfinite(values)
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        file_row = row + (2 if has_header else 1)
        name = raw.columns[col]
        cell = raw.iat[row, col]
        raise IngestionError(
            f"Valor no finito o no numérico '{cell}' en {path}, fila {file_row}, columna {col} ({name})"
        )

    names = [str(c) for c in raw.columns] if has_header else None
    frame = SeriesFrame(values, names)
    logger.info(f"Serie cargada desde {path}: T={frame.T}, D={frame.D}")
    return frame


def save_series(path, frame):
    """Escribir la serie con encabezado y precisión completa"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(frame.values, columns=frame.channel_names).to_csv(
        path, index=False, float_format="%.17g"
    )


def split_frame(frame, val_fraction):
    """Separar el tramo final del período de entrenamiento como validación"""
    n_val = int(round(frame.T * val_fraction))
    if n_val < 1 or n_val >= frame.T:
        raise DimensionError(
            f"val_fraction={val_fraction} deja un split vacío con T={frame.T}"
        )
    cut = frame.T - n_val
    return frame.slice(0, cut), frame.slice(cut, frame.T)


# ---------------------------------------------------------------------------
# Escalado Min-Max
# ---------------------------------------------------------------------------


def fit_minmax(train, epsilon=1e-8):
    if train.T < 1:
        raise DimensionError("No se puede ajustar el escalado sobre una serie vacía")
    return ScalerParams(
        mins=train.values.min(axis=0).copy(),
        maxs=train.values.max(axis=0).copy(),
        epsilon=float(epsilon),
    )


def _check_dims(frame, scaler):
    if frame.D != scaler.D:
        raise DimensionError(f"La serie tiene D={frame.D} canales y el escalado D={scaler.D}")


def apply_minmax(frame, scaler):
    """x' = (x - min) / (max - min + eps); sin recorte a [0, 1]"""
    _check_dims(frame, scaler)
    scaled = (frame.values - scaler.mins) / (scaler.maxs - scaler.mins + scaler.epsilon)
    return frame.with_values(scaled)


def inverse_minmax(frame, scaler):
    _check_dims(frame, scaler)
    raw = frame.values * (scaler.maxs - scaler.mins + scaler.epsilon) + scaler.mins
    return frame.with_values(raw)


def save_scaler(path, scaler):
    mapping = {"epsilon": scaler.epsilon}
    for j in range(scaler.D):
        mapping[f"min.{j}"] = float(scaler.mins[j])
        mapping[f"max.{j}"] = float(scaler.maxs[j])
    write_key_values(path, mapping)


def load_scaler(path):
    data = read_key_values(path, "archivo de escalado")
    D = sum(1 for key in data if key.startswith("min."))
    try:
        mins = np.array([float(data[f"min.{j}"]) for j in range(D)])
        maxs = np.array([float(data[f"max.{j}"]) for j in range(D)])
        epsilon = float(data.get("epsilon", "1e-8"))
    except (KeyError, ValueError) as e:
        raise IngestionError(f"Archivo de escalado inválido {path}: {e}")
    if np.any(maxs < mins):
        raise IngestionError(f"Archivo de escalado inválido {path}: max < min")
    return ScalerParams(mins, maxs, epsilon)


def training_medians(train_raw):
    """Mediana por canal sobre los valores crudos de entrenamiento"""
    return np.median(train_raw.values, axis=0)


def save_medians(path, medians):
    write_key_values(path, {f"median.{j}": float(m) for j, m in enumerate(medians)})


def load_medians(path):
    data = read_key_values(path, "archivo de medianas")
    return np.array([float(data[f"median.{j}"]) for j in range(len(data))])


# ---------------------------------------------------------------------------
# Matrices de rezagos
# ---------------------------------------------------------------------------


def lag_tensor(values, timestamps, W, tau_max):
    """
    B x W x P con X[b, r, j*tau_max + (lag-1)] = values[t_b - W - lag + r, j]
    """
    values = np.asarray(values)
    t = np.asarray(timestamps, dtype=np.int64)[:, None, None]
    rows = np.arange(W)[None, :, None]
    lags = np.arange(1, tau_max + 1)[None, None, :]
    index = t - W - lags + rows  # B x W x tau_max
    stacked = values[index]  # B x W x tau_max x D
    D = values.shape[1]
    return stacked.transpose(0, 1, 3, 2).reshape(len(timestamps), W, D * tau_max)


def build_lag_matrix(frame, t, W, tau_max):
    if t < first_valid_index(W, tau_max) or t >= frame.T:
        raise DimensionError(
            f"t={t} fuera del rango válido [{first_valid_index(W, tau_max)}, {frame.T - 1}]"
        )
    return LagDesignMatrix(t=t, X=lag_tensor(frame.values, [t], W, tau_max)[0], tau_max=tau_max)


class TargetBatchIterator:
    """
    Lotes de un solo objetivo sobre todos los instantes válidos (una época)
    Consumidor único; el orden depende solo de shuffle_seed
    """

    def __init__(self, frame, target, W, tau_max, batch_size, shuffle_seed=None):
        if not 0 <= target < frame.D:
            raise DimensionError(f"Objetivo {target} fuera de rango (D={frame.D})")
        timestamps = valid_timestamps(frame.T, W, tau_max)
        if len(timestamps) == 0:
            raise DimensionError(
                f"Serie demasiado corta (T={frame.T}) para W={W} y tau_max={tau_max}"
            )
        if shuffle_seed is not None:
            timestamps = np.random.default_rng(shuffle_seed).permutation(timestamps)
        self.frame = frame
        self.target = target
        self.W = W
        self.tau_max = tau_max
        self.batch_size = batch_size
        self.timestamps = timestamps
        self._position = 0

    def __len__(self):
        return -(-len(self.timestamps) // self.batch_size)

    def __iter__(self):
        return self

    def __next__(self):
        if self._position >= len(self.timestamps):
            raise StopIteration
        chunk = self.timestamps[self._position : self._position + self.batch_size]
        self._position += len(chunk)
        return TargetBatch(
            target_index=self.target,
            inputs=lag_tensor(self.frame.values, chunk, self.W, self.tau_max),
            targets=self.frame.values[chunk, self.target].copy(),
            timestamps=chunk,
        )


def iterate_target_batches(frame, i, W, tau_max, batch_size, shuffle_seed=None):
    return TargetBatchIterator(frame, i, W, tau_max, batch_size, shuffle_seed)
