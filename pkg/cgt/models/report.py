"""
Resultados de cada etapa
Pérdidas, puntajes, diagnósticos de seguridad, estado SPOT, atribución y métricas
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass
class LossBreakdown:
    """Componentes del objetivo de entrenamiento (promedio de los lotes no saltados)"""

    L_c: float = 0.0
    L_o: float = 0.0
    L_KL: float = 0.0
    L_res: float = 0.0
    R_prior: float = 0.0
    R_other: float = 0.0
    R_push: float = 0.0
    R_margin: float = 0.0
    R_grp: float = 0.0
    total: float = 0.0
    gamma_t: float = 0.0
    beta_t: float = 0.0
    skipped_batches: int = 0

    LOSS_FIELDS = (
        "L_c", "L_o", "L_KL", "L_res", "R_prior", "R_other", "R_push", "R_margin", "R_grp", "total"
    )

    @classmethod
    def mean_of(cls, items, gamma_t, beta_t, skipped):
        if not items:
            return cls(gamma_t=gamma_t, beta_t=beta_t, skipped_batches=skipped)
        values = {
            name: float(np.mean([getattr(item, name) for item in items]))
            for name in cls.LOSS_FIELDS
        }
        return cls(**values, gamma_t=gamma_t, beta_t=beta_t, skipped_batches=skipped)

    def to_dict(self):
        return asdict(self)

    def __repr__(self):
        return f"<LossBreakdown total={self.total:.5f} L_c={self.L_c:.5f} skipped={self.skipped_batches}>"


@dataclass
class ScoreSeries:
    """Puntajes NLL por objetivo (causal y auxiliar) y serie agregada S_t"""

    timestamps: np.ndarray
    causal: np.ndarray
    aux: np.ndarray
    aggregated: np.ndarray
    gamma_used: float = 0.0
    rule: str = "mean"
    k: int = 1

    @property
    def D(self):
        return self.causal.shape[1]

    def __len__(self):
        return len(self.timestamps)

    def to_dict(self):
        return {
            "length": len(self),
            "D": self.D,
            "gamma_used": self.gamma_used,
            "rule": self.rule,
            "k": self.k,
        }

    def __repr__(self):
        return f"<ScoreSeries T'={len(self)} D={self.D} gamma={self.gamma_used}>"


@dataclass
class SafetyDiagnostics:
    R: float
    M: float
    gamma_base: float
    gamma_used: float
    mode: str
    fallback_flags: List[bool] = field(default_factory=list)
    separations: List[float] = field(default_factory=list)
    tau_rel: float = 0.0
    tau_alpha: float = 0.0
    calibration_length: int = 0
    degenerate_batches: int = 0

    @property
    def fallback_fraction(self):
        if not self.fallback_flags:
            return 0.0
        return float(np.mean(self.fallback_flags))

    def to_dict(self):
        data = asdict(self)
        data["fallback_fraction"] = self.fallback_fraction
        return data

    def __repr__(self):
        return (
            f"<SafetyDiagnostics R={self.R:.4f} M={self.M:.4f} "
            f"gamma {self.gamma_base} -> {self.gamma_used} ({self.mode})>"
        )


@dataclass
class SpotState:
    """Estado del umbral SPOT: cola GPD sobre el umbral inicial u"""

    u: float
    peaks: List[float]
    sigma: float
    xi: float
    n: int
    z_q: float
    q: float
    level: float
    lambda_thr: float = 1.0

    @property
    def N_u(self):
        return len(self.peaks)

    def to_dict(self):
        return {
            "u": self.u,
            "sigma": self.sigma,
            "xi": self.xi,
            "n": self.n,
            "N_u": self.N_u,
            "z_q": self.z_q,
            "q": self.q,
            "level": self.level,
            "lambda_thr": self.lambda_thr,
        }

    def __repr__(self):
        return f"<SpotState u={self.u:.4f} z_q={self.z_q:.4f} N_u={self.N_u} n={self.n}>"


@dataclass
class ThresholdTrace:
    """Umbral por instante: theta, theta calibrado y decisión cruda"""

    timestamps: np.ndarray
    scores: np.ndarray
    theta: np.ndarray
    theta_tilde: np.ndarray
    decisions: np.ndarray
    burn_in: int = 0
    final_state: Optional[SpotState] = None

    def __len__(self):
        return len(self.timestamps)

    def to_dict(self):
        return {
            "length": len(self),
            "burn_in": self.burn_in,
            "alarms": int(self.decisions.sum()),
            "final_state": self.final_state.to_dict() if self.final_state else None,
        }

    def __repr__(self):
        return f"<ThresholdTrace T'={len(self)} alarms={int(self.decisions.sum())}>"


@dataclass
class AttributionResult:
    """Ranking de sensores para un instante o un evento"""

    t: int
    ranking: List[Tuple[int, float]]
    method: str
    end: Optional[int] = None
    event_id: Optional[int] = None
    baseline_stats: Optional[Dict[int, Tuple[float, float]]] = None
    deltas: Optional[Dict[int, float]] = None

    @property
    def start(self):
        return self.t

    @property
    def sensors(self):
        return [sensor for sensor, _ in self.ranking]

    def to_dict(self):
        return {
            "event_id": self.event_id,
            "start": self.t,
            "end": self.t if self.end is None else self.end,
            "method": self.method,
            "ranking": [{"sensor": s, "score": v} for s, v in self.ranking],
        }

    def __repr__(self):
        return f"<AttributionResult t={self.t} method={self.method} top={self.sensors[:3]}>"


@dataclass
class DetectionReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    point_adjusted: bool
    auroc: Optional[float] = None
    pr_auc: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def __repr__(self):
        return (
            f"<DetectionReport P={self.precision:.4f} R={self.recall:.4f} "
            f"F1={self.f1:.4f} adjusted={self.point_adjusted}>"
        )


@dataclass
class AttributionReport:
    hitrate: Dict[int, float]
    ndcg: Dict[int, float]
    per_event: List[dict] = field(default_factory=list)
    excluded_events: int = 0

    @property
    def n_events(self):
        return len(self.per_event)

    def to_dict(self):
        data = {}
        for p, value in self.hitrate.items():
            data[f"hitrate@{p}"] = value
        for p, value in self.ndcg.items():
            data[f"ndcg@{p}"] = value
        data["n_events"] = self.n_events
        data["excluded_events"] = self.excluded_events
        return data

    def __repr__(self):
        return f"<AttributionReport events={self.n_events} hitrate={self.hitrate}>"
