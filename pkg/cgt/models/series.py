"""
Entidades de series de tiempo
SeriesFrame, parámetros de escalado, matriz de rezagos y lotes por objetivo
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np


class SeriesFrame:
    """Serie multivariada T x D (filas = instantes, columnas = canales)"""

    def __init__(self, values, channel_names=None, sample_period=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        self.channel_names = (
            list(channel_names)
            if channel_names is not None
            else [f"x{j}" for j in range(values.shape[1])]
        )
        self.sample_period = sample_period

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]

    def with_values(self, values):
        """Mismo frame (nombres, período) con otros valores"""
        return SeriesFrame(values, self.channel_names, self.sample_period)

    def slice(self, start, stop):
        return self.with_values(self.values[start:stop])

    def to_dict(self):
        return {
            "T": self.T,
            "D": self.D,
            "channel_names": self.channel_names,
            "sample_period": self.sample_period,
        }

    def __repr__(self):
        return f"<SeriesFrame T={self.T} D={self.D}>"


@dataclass(frozen=True)
class ScalerParams:
    """Min-Max por canal ajustado sobre el split de entrenamiento"""

    mins: np.ndarray
    maxs: np.ndarray
    epsilon: float = 1e-8

    @property
    def D(self):
        return len(self.mins)

    def to_dict(self):
        return {
            "min": [float(v) for v in self.mins],
            "max": [float(v) for v in self.maxs],
            "epsilon": self.epsilon,
        }

    def __repr__(self):
        return f"<ScalerParams D={self.D} eps={self.epsilon}>"


def column_index(j, lag, tau_max):
    """Columna del par (sensor j, rezago lag): j externo, lag interno"""
    return j * tau_max + (lag - 1)


@dataclass
class LagDesignMatrix:
    """Matriz W x P de historias rezagadas para el instante t"""

    t: int
    X: np.ndarray
    tau_max: int

    def column(self, j, lag):
        return self.X[:, column_index(j, lag, self.tau_max)]

    def to_dict(self):
        return {"t": self.t, "shape": list(self.X.shape), "tau_max": self.tau_max}

    def __repr__(self):
        return f"<LagDesignMatrix t={self.t} shape={self.X.shape}>"


@dataclass
class TargetBatch:
    """Lote B x W x P; todas las muestras comparten el objetivo"""

    target_index: int
    inputs: np.ndarray
    targets: np.ndarray
    timestamps: np.ndarray
    flags: List[str] = field(default_factory=list)

    @property
    def size(self):
        return len(self.timestamps)

    def to_dict(self):
        return {
            "target_index": self.target_index,
            "size": self.size,
            "first_t": int(self.timestamps[0]) if self.size else None,
            "flags": self.flags,
        }

    def __repr__(self):
        return f"<TargetBatch target={self.target_index} B={self.size}>"


def first_valid_index(W, tau_max):
    return W + tau_max


def n_valid(T, W, tau_max) -> int:
    return max(0, T - first_valid_index(W, tau_max))


def valid_timestamps(T, W, tau_max):
    return np.arange(first_valid_index(W, tau_max), T)
