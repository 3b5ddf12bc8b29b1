"""
Umbral dinamico SPOT (picos sobre umbral con cola GPD) y ajuste por segmentos
"""

import logging
import math
import os

import numpy as np
import pandas as pd
from scipy import optimize

from cgt.errors import DegenerateFitError, LevelTooHighError, ThresholdError
from cgt.models.report import SpotState, ThresholdTrace

logger = logging.getLogger(__name__)

XI_MIN, XI_MAX = -0.5, 1.0
XI_GRID_SIZE = 64
XI_REFINE_ITERS = 20
MIN_PEAKS = 10
MIN_INIT = 100
_XI_ZERO = 1e-8


# ---------------------------------------------------------------------------
# Ajuste GPD
# ---------------------------------------------------------------------------


def gpd_log_likelihood(peaks, sigma, xi):
    """Log-verosimilitud GPD(sigma, xi) de los excesos; -inf fuera del soporte"""
    y = np.asarray(peaks, dtype=np.float64)
    n = len(y)
    if sigma <= 0:
        return -np.inf
    if abs(xi) < _XI_ZERO:
        return float(-n * math.log(sigma) - y.sum() / sigma)
    z = 1.0 + xi * y / sigma
    if np.any(z <= 0):
        return -np.inf
    return float(-n * math.log(sigma) - (1.0 + 1.0 / xi) * np.log(z).sum())


def _profile_sigma(y, xi):
    """sigma que maximiza la verosimilitud para xi fijo: (1+xi) mean(y/(sigma+xi y)) = 1"""
    if abs(xi) < _XI_ZERO:
        return float(y.mean())

    def score(sigma):
        return (1.0 + xi) * np.mean(y / (sigma + xi * y)) - 1.0

    y_max = float(y.max())
    # soporte: sigma + xi * y > 0 para todos los picos
    lo = max(-xi, 0.0) * y_max + 1e-12 * y_max
    hi = max(y_max, float(y.mean())) * (2.0 + abs(xi))
    while score(hi) > 0:
        hi *= 2.0
    if score(lo) < 0:
        return lo
    return float(optimize.brentq(score, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=200))


def _profile(y, xi):
    sigma = _profile_sigma(y, xi)
    return gpd_log_likelihood(y, sigma, xi), sigma


def fit_gpd(peaks):
    """
    Maxima verosimilitud por perfil sobre xi en [-0.5, 1]: grilla + refinamiento acotado
    Con menos de 10 picos se usa la cola exponencial (xi = 0)
    """
    y = np.asarray(peaks, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DegenerateFitError(f"Se necesitan al menos 2 picos distintos (hay {len(y)} picos)")
    if len(y) < MIN_PEAKS:
        logger.warning(f"Solo {len(y)} picos: ajuste exponencial de respaldo")
        return float(y.mean()), 0.0

    grid = np.union1d(np.linspace(XI_MIN, XI_MAX, XI_GRID_SIZE), [0.0])
    profile = [_profile(y, xi) for xi in grid]
    best = int(np.argmax([ll for ll, _ in profile]))
    best_ll, best_sigma = profile[best]
    best_xi = float(grid[best])

    lo = float(grid[max(best - 1, 0)])
    hi = float(grid[min(best + 1, len(grid) - 1)])
    refined = optimize.minimize_scalar(
        lambda xi: -_profile(y, xi)[0],
        bounds=(lo, hi),
        method="bounded",
        options={"maxiter": XI_REFINE_ITERS, "xatol": 1e-10},
    )
    if refined.success and -refined.fun > best_ll:
        best_xi = float(refined.x)
        best_ll, best_sigma = _profile(y, best_xi)

    if best_xi <= XI_MIN + 1e-9 or best_xi >= XI_MAX - 1e-9:
        logger.warning(f"xi estimado en el borde del rango [{XI_MIN}, {XI_MAX}]: {best_xi}")
    return best_sigma, best_xi


def tail_quantile(u, sigma, xi, q, n, N_u):
    """z_q = u + sigma/xi ((q n / N_u)^(-xi) - 1); limite exponencial si |xi| < 1e-6"""
    r = q * n / N_u
    if abs(xi) < 1e-6:
        return u - sigma * math.log(r)
    return u + (sigma / xi) * (r ** (-xi) - 1.0)


# ---------------------------------------------------------------------------
# SPOT
# ---------------------------------------------------------------------------


def spot_init(init_scores, q, level, lambda_thr=1.0):
    init = np.asarray(init_scores, dtype=np.float64)
    n = len(init)
    if n < MIN_INIT:
        logger.warning(f"Conjunto de inicialización pequeño ({n} < {MIN_INIT} puntos)")
    u = float(np.quantile(init, level))
    peaks = init[init > u] - u
    if len(peaks) == 0:
        raise LevelTooHighError(f"Ningun valor supera el cuantil {level} del conjunto inicial")
    sigma, xi = fit_gpd(peaks)
    z_q = tail_quantile(u, sigma, xi, q, n, len(peaks))
    return SpotState(
        u=u,
        peaks=[float(p) for p in peaks],
        sigma=sigma,
        xi=xi,
        n=n,
        z_q=z_q,
        q=q,
        level=level,
        lambda_thr=lambda_thr,
    )


def spot_stream(state, score_t):
    """
    Un paso del flujo; theta_t es el umbral contra el que se compara score_t
    Devuelve (state, theta_t, theta_tilde_t, alarma)
    """
    theta = state.z_q
    alarm = bool(score_t > theta)
    # las anomalías no entran a la cola
    if not alarm:
        state.n += 1
        if score_t > state.u:
            state.peaks.append(float(score_t - state.u))
            state.sigma, state.xi = fit_gpd(state.peaks)
            state.z_q = tail_quantile(state.u, state.sigma, state.xi, state.q, state.n, state.N_u)
    return state, theta, state.lambda_thr * theta, alarm


def burn_in_length(T_stream, burn_frac, burn_min):
    return max(int(math.ceil(burn_frac * T_stream)), burn_min)


def run_spot(scores, timestamps=None, q=1.53e-3, level=0.98, lambda_thr=1.0, burn_frac=0.1, burn_min=500):
    """Umbral para todo el flujo: el prefijo de arranque usa el z_q inicial"""
    scores = np.asarray(scores, dtype=np.float64)
    T_stream = len(scores)
    if T_stream == 0:
        raise ThresholdError("Serie de puntajes vacía")
    timestamps = np.arange(T_stream) if timestamps is None else np.asarray(timestamps)

    n_init = burn_in_length(T_stream, burn_frac, burn_min)
    if n_init >= T_stream:
        logger.warning(
            f"El arranque ({n_init}) cubre todo el flujo ({T_stream}); umbral constante"
        )
        n_init = T_stream

    state = spot_init(scores[:n_init], q, level, lambda_thr)
    theta = np.empty(T_stream)
    theta[:n_init] = state.z_q
    for t in range(n_init, T_stream):
        state, theta[t], _, _ = spot_stream(state, scores[t])

    theta_tilde = lambda_thr * theta
    decisions = (scores > theta_tilde).astype(np.int64)
    logger.info(
        f"SPOT: u={state.u:.5f} z_q final={state.z_q:.5f} alarmas={int(decisions.sum())}/{T_stream}"
    )
    return ThresholdTrace(timestamps, scores, theta, theta_tilde, decisions, n_init, state)


# ---------------------------------------------------------------------------
# Decisiones
# ---------------------------------------------------------------------------


def label_segments(labels):
    """Segmentos contiguos de 1s como pares (inicio, fin) inclusivos"""
    labels = np.asarray(labels).astype(bool)
    segments = []
    start = None
    for t, value in enumerate(labels):
        if value and start is None:
            start = t
        elif not value and start is not None:
            segments.append((start, t - 1))
            start = None
    if start is not None:
        segments.append((start, len(labels) - 1))
    return segments


def point_adjust(raw, segments):
    adjusted = np.asarray(raw).astype(np.int64).copy()
    for start, end in segments:
        if adjusted[start : end + 1].any():
            adjusted[start : end + 1] = 1
    return adjusted


def decide_and_adjust(scores, theta_tilde, gt_segments=None):
    """Decision cruda 1{S_t > theta~_t}; ajuste por segmento solo con verdad de campo"""
    scores = np.asarray(scores, dtype=np.float64)
    theta_tilde = np.asarray(theta_tilde, dtype=np.float64)
    if scores.shape != theta_tilde.shape:
        raise ThresholdError(f"Largos distintos: puntajes {scores.shape} y umbrales {theta_tilde.shape}")
    raw = (scores > theta_tilde).astype(np.int64)
    if gt_segments is None:
        return raw, raw.copy()
    return raw, point_adjust(raw, gt_segments)


def save_threshold_trace(path, trace):
    """CSV `t, theta, theta_tilde, decision_raw`"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(
        {
            "t": trace.timestamps,
            "theta": trace.theta,
            "theta_tilde": trace.theta_tilde,
            "decision_raw": trace.decisions,
        }
    ).to_csv(path, index=False, float_format="%.17g")


def load_threshold_trace(path):
    if not os.path.exists(path):
        raise ThresholdError(f"No existe la traza de umbrales: {path}")
    df = pd.read_csv(path)
    missing = {"t", "theta", "theta_tilde", "decision_raw"} - set(df.columns)
    if missing:
        raise ThresholdError(f"Traza de umbrales sin columnas {sorted(missing)}: {path}")
    return ThresholdTrace(
        timestamps=df["t"].to_numpy(dtype=np.int64),
        scores=np.full(len(df), np.nan),
        theta=df["theta"].to_numpy(dtype=np.float64),
        theta_tilde=df["theta_tilde"].to_numpy(dtype=np.float64),
        decisions=df["decision_raw"].to_numpy(dtype=np.int64),
    )
