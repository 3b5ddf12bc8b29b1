"""
Escenarios sintéticos: SCM lineal con rezagos y anomalías inyectadas
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

ANOMALY_TYPES = ("spike", "level-shift", "mechanism-break")


@dataclass
class ScmSpec:
    """x_t^i = sum coeff[(j, lag, i)] * x_{t-lag}^j + ruido_i"""

    D: int
    tau_max: int
    coefficients: Dict[Tuple[int, int, int], float]
    noise_std: np.ndarray
    T: int
    seed: int = 0
    warmup: int = 200

    def coefficient_tensor(self):
        """A[lag-1, i, j] = coeff (j, lag, i)"""
        A = np.zeros((self.tau_max, self.D, self.D))
        for (j, lag, i), value in self.coefficients.items():
            A[lag - 1, i, j] = value
        return A

    def to_dict(self):
        return {
            "D": self.D,
            "tau_max": self.tau_max,
            "coefficients": [
                {"source": j, "lag": lag, "target": i, "weight": w}
                for (j, lag, i), w in sorted(self.coefficients.items())
            ],
            "noise_std": [float(s) for s in self.noise_std],
            "T": self.T,
            "seed": self.seed,
        }

    def __repr__(self):
        return f"<ScmSpec D={self.D} tau_max={self.tau_max} edges={len(self.coefficients)} T={self.T}>"


@dataclass(frozen=True)
class AnomalyEvent:
    start: int
    length: int
    root: int
    type: str = "spike"
    magnitude: float = 8.0

    @property
    def end(self):
        """Último instante (inclusivo)"""
        return self.start + self.length - 1

    def to_dict(self):
        return {
            "start": self.start,
            "length": self.length,
            "root": self.root,
            "type": self.type,
            "magnitude": self.magnitude,
        }

    def __repr__(self):
        return f"<AnomalyEvent {self.type} root={self.root} [{self.start}..{self.end}]>"


@dataclass
class AnomalySpec:
    events: List[AnomalyEvent] = field(default_factory=list)

    def to_dict(self):
        return {"events": [e.to_dict() for e in self.events]}

    def __repr__(self):
        return f"<AnomalySpec events={len(self.events)}>"
