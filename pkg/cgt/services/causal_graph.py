"""
Grafo causal con rezagos: lista de aristas, máscaras de padres y descubrimiento
Descubrimiento en dos fases (selección de condiciones + prueba MCI) con correlación parcial lineal
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from cgt.errors import GraphError
from cgt.models.graph import CausalGraphPrior, LaggedEdge, ParentMask

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Lista de aristas
# ---------------------------------------------------------------------------


def _parse_optional_float(text, line_no):
    text = text.strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        raise GraphError(f"Línea {line_no}: valor no numérico '{text}'")


def load_edge_list(path, D=None, tau_max=None):
    """
    Leer lineas `fuente,rezago,objetivo[,fuerza[,p]]`
    D y tau_max se toman del encabezado `# D=<D> tau_max=<tau>` si no se pasan
    """
    if not os.path.exists(path):
        raise GraphError(f"No existe la lista de aristas: {path}")

    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                for token in text[1:].split():
                    key, _, value = token.partition("=")
                    if key == "D" and D is None:
                        D = int(value)
                    elif key == "tau_max" and tau_max is None:
                        tau_max = int(value)
                continue
            parts = text.split(",")
            if len(parts) < 3 or len(parts) > 5:
                raise GraphError(f"Línea {line_no} mal formada en {path}: '{text}'")
            try:
                source, lag, target = (int(p) for p in parts[:3])
            except ValueError:
                raise GraphError(f"Línea {line_no} mal formada en {path}: '{text}'")
            strength = _parse_optional_float(parts[3], line_no) if len(parts) > 3 else None
            p_value = _parse_optional_float(parts[4], line_no) if len(parts) > 4 else None
            rows.append((line_no, LaggedEdge(source, lag, target, strength, p_value)))

    if D is None or tau_max is None:
        raise GraphError(f"{path} no declara D y tau_max; paselos explicitamente")

    graph = CausalGraphPrior(D, tau_max)
    for line_no, edge in rows:
        try:
            graph.add(edge)
        except GraphError as e:
            raise GraphError(f"Línea {line_no} de {path}: {e}")
    if graph.duplicates:
        logger.warning(f"{graph.duplicates} aristas duplicadas ignoradas en {path}")
    logger.info(f"Grafo cargado desde {path}: {len(graph)} aristas")
    return graph


def save_edge_list(path, graph):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# D={graph.D} tau_max={graph.tau_max}\n")
        fh.write("# source,lag,target,strength,p_value\n")
        for edge in graph.edges:
            line = f"{edge.source},{edge.lag},{edge.target}"
            if edge.strength is not None or edge.p_value is not None:
                strength = "" if edge.strength is None else format(edge.strength, ".17g")
                p_value = "" if edge.p_value is None else format(edge.p_value, ".17g")
                line += f",{strength},{p_value}"
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# Mascaras
# ---------------------------------------------------------------------------


def parent_mask(graph, i):
    if not 0 <= i < graph.D:
        raise GraphError(f"Objetivo {i} fuera de rango (D={graph.D})")
    return ParentMask.from_graph(graph, i)


def parent_masks(graph):
    """Matriz D x P con una máscara por fila"""
    return np.stack([parent_mask(graph, i).pi for i in range(graph.D)])


def check_graph(graph, D, tau_max):
    if graph.D != D or graph.tau_max != tau_max:
        raise GraphError(
            f"El grafo (D={graph.D}, tau_max={graph.tau_max}) no coincide con "
            f"los datos/modelo (D={D}, tau_max={tau_max})"
        )


# ---------------------------------------------------------------------------
# Correlación parcial
# ---------------------------------------------------------------------------


def _residuals(v, design):
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return v - design @ coef


def partial_correlation(x, y, Z=None):
    """
    Correlación parcial de x e y dado Z (regresión lineal con intercepto)
    p-valor bilateral del estadístico t con df = n - 2 - |Z|
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if Z is None or np.size(Z) == 0:
        Z = np.empty((n, 0))
    Z = np.asarray(Z, dtype=np.float64).reshape(n, -1)
    df = n - 2 - Z.shape[1]
    if df < 1:
        raise GraphError(f"Muy pocas muestras (n={n}) para {Z.shape[1]} condiciones")

    design = np.column_stack([np.ones(n), Z])
    rx = _residuals(x, design)
    ry = _residuals(y, design)
    sx, sy = np.sqrt(rx @ rx), np.sqrt(ry @ ry)
    if sx < 1e-12 or sy < 1e-12:
        return 0.0, 1.0
    r = float(np.clip((rx @ ry) / (sx * sy), -1.0, 1.0))
    if abs(r) >= 1.0:
        return r, 0.0
    t_stat = r * np.sqrt(df / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(t_stat), df))
    return r, p


# ---------------------------------------------------------------------------
# Descubrimiento
# ---------------------------------------------------------------------------


class _LaggedView:
    """x_{t - lag}^j para t en [2 tau_max, T), profundidad suficiente para la fase MCI"""

    def __init__(self, values, tau_max):
        self.values = values
        self.start = 2 * tau_max
        self.T = values.shape[0]

    @property
    def n(self):
        return self.T - self.start

    def get(self, j, lag):
        return self.values[self.start - lag : self.T - lag, j]

    def stack(self, nodes):
        if not nodes:
            return None
        return np.column_stack([self.get(j, lag) for j, lag in nodes])


def _select_conditions(view, i, candidates, alpha_level, max_cond):
    """Fase 1: elimina candidatos no significativos con conjuntos de condiciones crecientes"""
    y = view.get(i, 0)
    parents = list(candidates)
    min_abs = {c: np.inf for c in parents}
    max_p = {c: 0.0 for c in parents}

    for p in range(max_cond + 1):
        if len(parents) - 1 < p:
            break
        kept = []
        for c in parents:
            conds = [d for d in parents if d != c][:p]
            r, pval = partial_correlation(view.get(*c), y, view.stack(conds))
            min_abs[c] = min(min_abs[c], abs(r))
            max_p[c] = max(max_p[c], pval)
            if pval <= alpha_level:
                kept.append(c)
        # los más fuertes primero: el siguiente nivel condiciona en ellos
        parents = sorted(kept, key=lambda c: (-min_abs[c], c))
    return parents


def _mci_test(view, i, parents, alpha_level):
    """Fase 2: cada enlace condicionado en los padres de i y los padres de j desplazados"""
    y = view.get(i, 0)
    edges = []
    for j, lag in parents[i]:
        conds = [c for c in parents[i] if c != (j, lag)]
        for k, m in parents[j]:
            shifted = (k, m + lag)
            if shifted not in conds:
                conds.append(shifted)
        r, pval = partial_correlation(view.get(j, lag), y, view.stack(conds))
        if pval <= alpha_level:
            edges.append(LaggedEdge(j, lag, i, strength=r, p_value=pval))
    return edges


def discover_pcmci_lite(train, tau_max, alpha_level=0.01, max_cond=3, workers=1):
    """Grafo con rezagos 1..tau_max estimado solo sobre el split de entrenamiento"""
    values = train.values
    T, D = values.shape
    graph = CausalGraphPrior(D, tau_max)

    if alpha_level <= 0:
        logger.info("alpha_level <= 0: grafo vacío")
        return graph
    if T < 10 * D * tau_max:
        logger.warning(
            f"Pocas muestras para el descubrimiento (T={T}, D*tau_max={D * tau_max})"
        )
    if T - 2 * tau_max < 10:
        raise GraphError(f"Serie demasiado corta (T={T}) para tau_max={tau_max}")

    std = values.std(axis=0)
    active = [j for j in range(D) if std[j] > 1e-12]
    for j in range(D):
        if j not in active:
            logger.warning(f"Canal {j} con varianza nula: excluido del descubrimiento")

    view = _LaggedView(values, tau_max)
    candidates = [(j, lag) for j in active for lag in range(1, tau_max + 1)]

    def phase_one(i):
        return _select_conditions(view, i, candidates, alpha_level, max_cond)

    parents = {j: [] for j in range(D)}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i, selected in zip(active, pool.map(phase_one, active)):
            parents[i] = selected

    for i in active:
        for edge in _mci_test(view, i, parents, alpha_level):
            graph.add(edge)

    logger.info(f"Descubrimiento completo: {len(graph)} aristas (alpha={alpha_level}, max_cond={max_cond})")
    return graph


def graph_scores(found, truth):
    """(precisión, recall) de las aristas encontradas contra el grafo verdadero"""
    found_keys = {e.key for e in found.edges}
    true_keys = {e.key for e in truth.edges}
    tp = len(found_keys & true_keys)
    if found_keys:
        precision = tp / len(found_keys)
    else:
        precision = 1.0 if not true_keys else 0.0
    recall = tp / len(true_keys) if true_keys else 1.0
    return precision, recall
