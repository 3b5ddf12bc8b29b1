"""
Banco sintético: SCM lineal con rezagos, anomalías inyectadas con sensor raíz conocido
y verdad de campo en los mismos formatos que consume el pipeline
"""

import dataclasses
import logging
import os

import numpy as np
import pandas as pd

from cgt.config.config import dump_config
from cgt.errors import ScenarioError
from cgt.models.graph import CausalGraphPrior, LaggedEdge
from cgt.models.scenario import ANOMALY_TYPES, AnomalyEvent, AnomalySpec, ScmSpec
from cgt.models.series import SeriesFrame
from cgt.services.causal_graph import save_edge_list
from cgt.services.data_pipeline import save_series
from cgt.services.evaluation import save_gt_causes

logger = logging.getLogger(__name__)

# (fuente, rezago, objetivo) -> peso
DEFAULT_COEFFICIENTS = {
    (1, 1, 1): 0.5,
    (0, 1, 1): 0.8,
    (1, 2, 2): 0.6,
    (0, 2, 3): -0.7,
    (3, 1, 4): 0.8,
    (4, 1, 4): 0.5,
}
ROOT_CYCLE = (0, 3)
SETTLE_TOL = 1e-9


def default_scm(seed=0, D=5, tau_max=2, T=6000):
    """Cinco canales con dos raíces exógenas (0 y 3); canales extra en cadena"""
    if D < 5 or tau_max < 2:
        raise ScenarioError(f"El SCM por defecto necesita D >= 5 y tau_max >= 2 (D={D}, tau_max={tau_max})")
    coefficients = dict(DEFAULT_COEFFICIENTS)
    for k in range(5, D):
        coefficients[(k - 1, 1, k)] = 0.6
    return ScmSpec(D=D, tau_max=tau_max, coefficients=coefficients, noise_std=np.ones(D), T=T, seed=seed)


def check_stability(spec):
    """Radio espectral de la matriz companera < 1; devuelve el radio"""
    for (j, lag, i) in spec.coefficients:
        if not (0 <= j < spec.D and 0 <= i < spec.D and 1 <= lag <= spec.tau_max):
            raise ScenarioError(f"Coeficiente fuera de rango: fuente={j} rezago={lag} objetivo={i}")
    A = spec.coefficient_tensor()
    D, tau = spec.D, spec.tau_max
    companion = np.zeros((D * tau, D * tau))
    companion[:D, :] = np.hstack(list(A))
    if tau > 1:
        companion[D:, :-D] = np.eye(D * (tau - 1))
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    if radius >= 1.0:
        raise ScenarioError(f"SCM inestable: radio espectral {radius:.4f} >= 1")
    return radius


def generate(spec):
    """Simular el SCM (descartando el calentamiento); devuelve (serie, grafo verdadero)"""
    check_stability(spec)
    rng = np.random.default_rng(spec.seed)
    A = spec.coefficient_tensor()
    total = spec.T + spec.warmup
    noise = rng.standard_normal((total, spec.D)) * np.asarray(spec.noise_std, dtype=np.float64)

    x = np.zeros((total, spec.D))
    x[: spec.tau_max] = noise[: spec.tau_max]
    for t in range(spec.tau_max, total):
        x[t] = noise[t]
        for lag in range(1, spec.tau_max + 1):
            x[t] += A[lag - 1] @ x[t - lag]

    graph = CausalGraphPrior(spec.D, spec.tau_max)
    for (j, lag, i), weight in sorted(spec.coefficients.items()):
        if weight != 0.0:
            graph.add(LaggedEdge(j, lag, i, strength=weight))
    return SeriesFrame(x[spec.warmup :]), graph


# ---------------------------------------------------------------------------
# Inyeccion
# ---------------------------------------------------------------------------


def validate_anomalies(anomaly_spec, T, D, first_valid=0):
    events = sorted(anomaly_spec.events, key=lambda e: e.start)
    previous = None
    for event in events:
        if event.type not in ANOMALY_TYPES:
            raise ScenarioError(f"Tipo de anomalía desconocido: {event.type}")
        if event.length < 1:
            raise ScenarioError(f"Evento con largo {event.length}")
        if not 0 <= event.root < D:
            raise ScenarioError(f"Sensor raíz {event.root} fuera de rango (D={D})")
        if event.start < first_valid or event.end >= T:
            raise ScenarioError(f"Evento [{event.start}, {event.end}] fuera de [{first_valid}, {T})")
        if previous is not None and event.start <= previous.end:
            raise ScenarioError(f"Eventos solapados: {previous} y {event}")
        previous = event
    return events


def _break_mechanism(values, event, scm):
    """
    La raíz pierde sus aristas entrantes durante el evento (ruido propio amplificado)
    y los demás canales se re-simulan con su ruido recuperado desde el inicio del evento.
    Tras el fin del evento el transitorio decae sin etiqueta; la re-simulación se corta
    cuando los últimos tau_max instantes coinciden con la serie original (SETTLE_TOL)
    """
    A = scm.coefficient_tensor()
    tau = scm.tau_max
    if event.start < tau:
        raise ScenarioError(f"Un quiebre de mecanismo necesita {tau} instantes previos")

    def predict(x, t):
        return sum(A[lag - 1] @ x[t - lag] for lag in range(1, tau + 1))

    original = values.copy()
    out = values.copy()
    for t in range(event.start, len(values)):
        if t > event.end + tau and np.max(np.abs(out[t - tau : t] - original[t - tau : t])) <= SETTLE_TOL:
            break
        noise_t = original[t] - predict(original, t)
        out[t] = predict(out, t) + noise_t
        if t <= event.end:
            out[t, event.root] = event.magnitude * noise_t[event.root]
    return out


def inject(frame, anomaly_spec, scm=None, first_valid=0):
    """
    Devuelve (serie con anomalías, etiquetas, causas por evento)
    spike y level-shift actúan solo sobre el sensor raíz; mechanism-break se propaga
    """
    events = validate_anomalies(anomaly_spec, frame.T, frame.D, first_valid)
    values = frame.values.copy()
    mean, std = frame.values.mean(axis=0), frame.values.std(axis=0)
    labels = np.zeros(frame.T, dtype=np.int64)
    causes = []

    for event_id, event in enumerate(events):
        window = slice(event.start, event.end + 1)
        if event.type == "spike":
            values[window, event.root] += event.magnitude * std[event.root]
        elif event.type == "level-shift":
            values[window, event.root] = mean[event.root] + event.magnitude * std[event.root]
        else:
            if scm is None:
                raise ScenarioError("mechanism-break requiere el SCM generador")
            values = _break_mechanism(values, event, scm)
        labels[window] = 1
        causes.append({"event_id": event_id, "start": event.start, "end": event.end, "causes": [event.root]})
        logger.info(f"Evento {event_id}: {event}")

    return frame.with_values(values), labels, causes


def default_anomaly_spec(n_test, n_events=3, length=20, magnitude=8.0, event_type="spike", first_valid=0):
    """Eventos equiespaciados en la segunda parte de la serie de prueba; raíces 0, 3, 0..."""
    if n_events == 0:
        return AnomalySpec([])
    lo = max(first_valid, min(600, n_test // 2))
    hi = n_test - length - 20
    if hi < lo:
        raise ScenarioError(f"La serie de prueba (n={n_test}) es muy corta para {n_events} eventos")
    starts = np.linspace(lo, hi, n_events).astype(int)
    events = [
        AnomalyEvent(int(start), length, ROOT_CYCLE[k % len(ROOT_CYCLE)], event_type, magnitude)
        for k, start in enumerate(starts)
    ]
    return AnomalySpec(events)


# ---------------------------------------------------------------------------
# Escritura del banco
# ---------------------------------------------------------------------------


def bench_files(out_dir):
    return {
        "train": os.path.join(out_dir, "train.csv"),
        "val": os.path.join(out_dir, "val.csv"),
        "test": os.path.join(out_dir, "test.csv"),
        "labels": os.path.join(out_dir, "labels.csv"),
        "graph": os.path.join(out_dir, "graph.csv"),
        "gt_causes": os.path.join(out_dir, "gt_causes.csv"),
        "config": os.path.join(out_dir, "cgt.cfg"),
    }


def write_bench(cfg, out_dir=None):
    """
    Generar train/val/test, etiquetas, grafo, causas y una configuración lista para `pipeline`
    Devuelve el diccionario de archivos escritos
    """
    synth = cfg.synth
    out_dir = out_dir or synth.out_dir
    os.makedirs(out_dir, exist_ok=True)
    files = bench_files(out_dir)

    T = synth.n_train + synth.n_val + synth.n_test
    scm = default_scm(synth.seed, synth.D, synth.tau_max, T)
    frame, graph = generate(scm)
    train = frame.slice(0, synth.n_train)
    val = frame.slice(synth.n_train, synth.n_train + synth.n_val)
    test = frame.slice(synth.n_train + synth.n_val, T)

    first_valid = cfg.model.W + synth.tau_max
    spec = default_anomaly_spec(
        synth.n_test, synth.n_events, synth.event_length, synth.magnitude, synth.event_type, first_valid
    )
    test, labels, causes = inject(test, spec, scm, first_valid)

    save_series(files["train"], train)
    save_series(files["val"], val)
    save_series(files["test"], test)
    pd.DataFrame({"label": labels}).to_csv(files["labels"], index=False)
    save_edge_list(files["graph"], graph)
    save_gt_causes(files["gt_causes"], causes)

    bench_cfg = dataclasses.replace(
        cfg,
        data=dataclasses.replace(
            cfg.data,
            train_path=files["train"],
            val_path=files["val"],
            test_path=files["test"],
            labels_path=files["labels"],
            gt_causes_path=files["gt_causes"],
            gt_graph_path=files["graph"],
            has_header=True,
        ),
        model=dataclasses.replace(cfg.model, tau_max=synth.tau_max, D=synth.D),
    )
    dump_config(bench_cfg, files["config"])
    logger.info(
        f"Banco sintético en {out_dir}: T={T} D={synth.D} eventos={len(spec.events)} aristas={len(graph)}"
    )
    return files
