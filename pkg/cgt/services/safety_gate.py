"""
Compuerta de seguridad: elige el gamma desplegado sobre un prefijo sin etiquetas
Prueba de estrés permutando las columnas no-padre + separación de compuertas
"""

import logging
import math

import numpy as np

from cgt.config.storage import read_key_values, write_key_values
from cgt.errors import SafetyError
from cgt.models.report import SafetyDiagnostics
from cgt.models.series import TargetBatch, n_valid
from cgt.services.scoring import aggregate, blend, score_targets

logger = logging.getLogger(__name__)


def permute_array(X, pi, seed):
    """Permuta las muestras del lote en las columnas no-padre (una permutación por lote)"""
    non_parent = np.asarray(pi) < 0.5
    if X.shape[0] < 2 or not non_parent.any():
        return X
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    out = X.copy()
    out[:, :, non_parent] = X[perm][:, :, non_parent]
    return out


def permute_non_parents(batch, pi, seed):
    """Version sobre TargetBatch; un lote de tamaño 1 queda igual y se marca"""
    if batch.size < 2:
        logger.warning(f"Lote de tamaño {batch.size}: permutación identidad")
        return TargetBatch(
            batch.target_index,
            batch.inputs.copy(),
            batch.targets.copy(),
            batch.timestamps.copy(),
            flags=batch.flags + ["identity_permutation"],
        )
    return TargetBatch(
        batch.target_index,
        permute_array(batch.inputs, pi, seed),
        batch.targets.copy(),
        batch.timestamps.copy(),
        flags=list(batch.flags),
    )


def calibration_prefix(frame, W, tau_max, frac=0.2, min_points=500):
    """Primeros max(frac * T', min_points) puntos del flujo (con su historia previa)"""
    stream = n_valid(frame.T, W, tau_max)
    if stream <= 0:
        raise SafetyError("Prefijo de calibración vacío: la serie no tiene instantes válidos")
    n_cal = min(stream, max(int(math.ceil(frac * stream)), min_points))
    return frame.slice(0, W + tau_max + n_cal)


def gate_separation(block):
    """alpha medio en padres menos alpha medio en no-padres (conjunto vacío -> 0)"""
    alpha = block.gate().detach().double().numpy()
    parent = block.parent_bool.numpy()
    mean_par = float(alpha[parent].mean()) if parent.any() else 0.0
    mean_oth = float(alpha[~parent].mean()) if (~parent).any() else 0.0
    return mean_par - mean_oth


def sensitivity_ratio(s_mix, s_perm, epsilon=1e-8):
    """R = E|S_mix - S_perm| / (E|S_mix| + epsilon)"""
    s_mix = np.asarray(s_mix, dtype=np.float64)
    s_perm = np.asarray(s_perm, dtype=np.float64)
    return float(np.mean(np.abs(s_mix - s_perm)) / (np.mean(np.abs(s_mix)) + epsilon))


def select_gamma(R, M, gamma_base, tau_rel, tau_alpha, mode="soft"):
    """
    hard: 0 si R > tau_rel o M < tau_alpha, si no gamma_base
    soft: gamma_base * clip((M - tau_alpha) / (1 - tau_alpha), 0, 1); R solo se reporta
    """
    if mode == "hard":
        return 0.0 if (R > tau_rel or M < tau_alpha) else float(gamma_base)
    if mode == "soft":
        scale = float(np.clip((M - tau_alpha) / (1.0 - tau_alpha), 0.0, 1.0))
        return float(gamma_base) * scale
    raise SafetyError(f"Modo de seguridad desconocido: {mode}")


def compute_safety(blocks, calib, scoring_cfg, safety_cfg, gamma_base, seed=None, workers=1):
    """Diagnósticos R, M y gamma_used sobre el prefijo de calibración escalado"""
    if calib.T == 0:
        raise SafetyError("Prefijo de calibración vacío")
    cfg = blocks[0].cfg
    seed = scoring_cfg.seed if seed is None else seed
    batch_size = scoring_cfg.batch_size
    n_points = n_valid(calib.T, cfg.W, cfg.tau_max)
    degenerate = 1 if n_points % batch_size == 1 else 0

    def perturb(block, X, batch_index):
        # misma permutación para todos los objetivos en un mismo lote
        batch_seed = int(np.random.SeedSequence([seed, batch_index]).generate_state(1)[0])
        return permute_array(X, block.parent_mask.double().numpy(), batch_seed)

    _, causal, aux = score_targets(blocks, calib, cfg.S, seed, batch_size, workers)
    _, causal_p, aux_p = score_targets(blocks, calib, cfg.S, seed, batch_size, workers, perturb=perturb)

    rule, k = scoring_cfg.aggregation, scoring_cfg.topk
    s_mix = aggregate(blend(causal, aux, gamma_base), rule, k)
    s_perm = aggregate(blend(causal_p, aux_p, gamma_base), rule, k)
    R = sensitivity_ratio(s_mix, s_perm, safety_cfg.epsilon)

    separations = [gate_separation(block) for block in blocks]
    M = float(np.mean(separations))
    flags = [s < safety_cfg.tau_alpha for s in separations]

    gamma_used = select_gamma(
        R, M, gamma_base, safety_cfg.tau_rel, safety_cfg.tau_alpha, safety_cfg.mode
    )
    if degenerate:
        logger.warning("El último lote de calibración tiene una sola muestra (permutación identidad)")
    logger.info(
        f"Compuerta de seguridad: R={R:.5f} M={M:.5f} gamma {gamma_base} -> {gamma_used} "
        f"({safety_cfg.mode}, {sum(flags)}/{len(flags)} objetivos en respaldo)"
    )
    return SafetyDiagnostics(
        R=R,
        M=M,
        gamma_base=float(gamma_base),
        gamma_used=gamma_used,
        mode=safety_cfg.mode,
        fallback_flags=flags,
        separations=separations,
        tau_rel=safety_cfg.tau_rel,
        tau_alpha=safety_cfg.tau_alpha,
        calibration_length=n_points,
        degenerate_batches=degenerate,
    )


def write_safety(path, diag, report_path=None):
    """Archivo clave=valor + reporte legible opcional"""
    write_key_values(
        path,
        {
            "R": diag.R,
            "M": diag.M,
            "gamma_base": diag.gamma_base,
            "gamma_used": diag.gamma_used,
            "mode": diag.mode,
            "fallback_fraction": diag.fallback_fraction,
            "tau_rel": diag.tau_rel,
            "tau_alpha": diag.tau_alpha,
            "calibration_length": diag.calibration_length,
        },
    )
    if report_path:
        lines = [
            "=" * 60,
            "DIAGNOSTICO DE SEGURIDAD",
            "=" * 60,
            f"Sensibilidad R:          {diag.R:.6f} (tau_rel={diag.tau_rel})",
            f"Separacion de compuerta: {diag.M:.6f} (tau_alpha={diag.tau_alpha})",
            f"gamma base -> usado:     {diag.gamma_base} -> {diag.gamma_used} ({diag.mode})",
            f"Respaldo (%):            {100.0 * diag.fallback_fraction:.1f}",
            f"Prefijo de calibración:  {diag.calibration_length} puntos",
            "-" * 60,
        ]
        for i, (sep, flag) in enumerate(zip(diag.separations, diag.fallback_flags)):
            lines.append(f"objetivo {i}: separación={sep:.6f}{'  [respaldo]' if flag else ''}")
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def load_gamma_used(path):
    data = read_key_values(path, "diagnóstico de seguridad")
    try:
        return float(data["gamma_used"]), float(data["gamma_base"])
    except (KeyError, ValueError):
        raise SafetyError(f"Diagnóstico de seguridad inválido: {path}")
