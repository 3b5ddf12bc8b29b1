"""
Entidades del grafo causal con rezagos
Aristas (j, lag) -> i, grafo prior y máscara de padres por objetivo
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cgt.errors import GraphError
from cgt.models.series import column_index


@dataclass(frozen=True)
class LaggedEdge:
    """Arista j --(lag)--> i"""

    source: int
    lag: int
    target: int
    strength: Optional[float] = None
    p_value: Optional[float] = None

    @property
    def key(self):
        return (self.source, self.lag, self.target)

    def to_dict(self):
        return {
            "source": self.source,
            "lag": self.lag,
            "target": self.target,
            "strength": self.strength,
            "p_value": self.p_value,
        }

    def __repr__(self):
        return f"<LaggedEdge {self.source} -({self.lag})-> {self.target}>"


class CausalGraphPrior:
    """Grafo dirigido con rezagos; sin triples (j, lag, i) repetidos"""

    def __init__(self, D, tau_max, edges=()):
        if D < 1 or tau_max < 1:
            raise GraphError(f"D y tau_max deben ser >= 1 (D={D}, tau_max={tau_max})")
        self.D = D
        self.tau_max = tau_max
        self._edges = {}
        self.duplicates = 0
        for edge in edges:
            self.add(edge)

    def add(self, edge):
        """Agregar una arista; devuelve False si ya existia"""
        if not (0 <= edge.source < self.D and 0 <= edge.target < self.D):
            raise GraphError(f"Índice de canal fuera de rango en {edge!r} (D={self.D})")
        if not 1 <= edge.lag <= self.tau_max:
            raise GraphError(f"Rezago fuera de rango en {edge!r} (1..{self.tau_max})")
        if edge.key in self._edges:
            self.duplicates += 1
            return False
        self._edges[edge.key] = edge
        return True

    @property
    def edges(self):
        # orden estable: objetivo, fuente, rezago
        return sorted(self._edges.values(), key=lambda e: (e.target, e.source, e.lag))

    @property
    def P(self):
        return self.D * self.tau_max

    def has_edge(self, source, lag, target):
        return (source, lag, target) in self._edges

    def parents(self, target):
        return [(e.source, e.lag) for e in self.edges if e.target == target]

    def __len__(self):
        return len(self._edges)

    def __contains__(self, key):
        return tuple(key) in self._edges

    def to_dict(self):
        return {
            "D": self.D,
            "tau_max": self.tau_max,
            "edges": [e.to_dict() for e in self.edges],
        }

    def __repr__(self):
        return f"<CausalGraphPrior D={self.D} tau_max={self.tau_max} edges={len(self)}>"


@dataclass
class ParentMask:
    """pi_i: vector binario de largo P = D * tau_max"""

    target: int
    pi: np.ndarray

    @classmethod
    def from_graph(cls, graph, target):
        pi = np.zeros(graph.P, dtype=np.float64)
        for source, lag in graph.parents(target):
            pi[column_index(source, lag, graph.tau_max)] = 1.0
        return cls(target, pi)

    @property
    def n_parents(self):
        return int(self.pi.sum())

    def to_dict(self):
        return {"target": self.target, "pi": [int(v) for v in self.pi]}

    def __repr__(self):
        return f"<ParentMask target={self.target} parents={self.n_parents}/{len(self.pi)}>"
