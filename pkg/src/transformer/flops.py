"""
Conteo de FLOPs de la auto-atención (multiplicaciones por cabeza)

Sin poda:
    3 N d d_m + 2 N^2 d_m + N d_m^2

Con poda (alpha = fracción de queries podadas, lambda = fracción de
dependencias podadas), lectura kept-fraction (por defecto):
    (3 - alpha) N d d_m + (1 - alpha)(2 - lambda) N^2 d_m + (1 - alpha) N d_m^2

Lectura as-printed: los factores (1 - alpha) de los dos últimos términos se
reemplazan por alpha. Con alpha = lambda = 0 no coincide con el conteo sin poda.

Convención del conteo instrumentado (solo productos de matrices):
    Q de las queries conservadas      kept * d * d_m
    K y V de todos los parches        2 * N * d * d_m
    Q Kᵀ de las filas conservadas     kept * N * d_m
    A' V sobre entradas sobrevivientes  nnz(M) * d_m
    proyección de salida por cabeza   kept * d_m^2
Con kept = (1 - alpha) N y nnz = (1 - lambda) kept N coincide exactamente con
la fórmula kept-fraction.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from ..models.apformer_models import FlopMode, FlopReport, PruneDecision
from .pruning import RENORM_EPS


def flops_sa(n: int, d: int, d_m: int) -> int:
    if min(n, d, d_m) < 1:
        raise ValueError(f"N, d, d_m deben ser positivos: {n}, {d}, {d_m}")
    return 3 * n * d * d_m + 2 * n * n * d_m + n * d_m * d_m


def flops_psa(
    n: int, d: int, d_m: int, alpha: float, lam: float, mode: FlopMode = FlopMode.KEPT_FRACTION
) -> int:
    if min(n, d, d_m) < 1:
        raise ValueError(f"N, d, d_m deben ser positivos: {n}, {d}, {d_m}")
    if not (0.0 <= alpha < 1.0 and 0.0 <= lam < 1.0):
        raise ValueError(f"alpha y lambda deben estar en [0, 1): {alpha}, {lam}")
    mode = FlopMode(mode)
    factor = alpha if mode is FlopMode.AS_PRINTED else 1.0 - alpha
    value = (
        (3.0 - alpha) * n * d * d_m
        + factor * (2.0 - lam) * n * n * d_m
        + factor * n * d_m * d_m
    )
    return int(round(value))


class MultiplyCounter:
    """Producto de matrices numpy que acumula el número de multiplicaciones"""

    def __init__(self):
        self.count = 0

    def matmul(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        self.count += left.shape[0] * left.shape[1] * right.shape[1]
        return left @ right

    def sparse_rows_matmul(self, weights: np.ndarray, mask: np.ndarray, values: np.ndarray) -> np.ndarray:
        """(weights * mask) @ values recorriendo solo las entradas con mask != 0"""
        rows, cols = np.nonzero(mask)
        out = np.zeros((weights.shape[0], values.shape[1]))
        np.add.at(out, rows, weights[rows, cols][:, None] * values[cols])
        self.count += len(rows) * values.shape[1]
        return out


def pruned_attention_kernel(
    features: np.ndarray,
    e_q: np.ndarray,
    e_k: np.ndarray,
    e_v: np.ndarray,
    kept_indices: np.ndarray,
    mask: np.ndarray,
    bias: Optional[np.ndarray] = None,
    w_out: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Auto-atención podada de una cabeza con conteo de multiplicaciones

    Args:
        features: N x d
        e_q, e_k, e_v: d x d_m
        kept_indices: queries conservadas
        mask: kept x N binaria
        bias: sesgo posicional N x N (opcional)
        w_out: proyección de salida d_m x d_m (identidad si no se indica)

    Returns:
        (salida kept x d_m, A' kept x N, multiplicaciones)
    """
    kept_indices = np.asarray(kept_indices, dtype=np.int64)
    counter = MultiplyCounter()
    queries = counter.matmul(features[kept_indices], e_q)
    keys = counter.matmul(features, e_k)
    values = counter.matmul(features, e_v)

    logits = counter.matmul(queries, keys.T) * (1.0 / np.sqrt(e_q.shape[1]))
    if bias is not None:
        logits = logits + bias[kept_indices]
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    attention = shifted / shifted.sum(axis=1, keepdims=True)

    weights = mask * np.exp(attention)
    renormed = weights / (weights.sum(axis=1, keepdims=True) + RENORM_EPS)
    mixed = counter.sparse_rows_matmul(renormed, mask, values)
    if w_out is None:
        w_out = np.eye(e_q.shape[1])
    output = counter.matmul(mixed, w_out)
    return output, renormed, counter.count


def flop_report(
    n: int,
    d: int,
    d_m: int,
    decisions: Sequence[PruneDecision],
    mode: FlopMode = FlopMode.KEPT_FRACTION,
) -> FlopReport:
    """
    Agregar el conteo de varias cabezas (o bloques x cabezas)

    omega_sa suma el costo sin poda de cada cabeza; omega_psa_measured suma
    las multiplicaciones que registró el kernel instrumentado en cada
    decisión. alpha y lambda son las tasas agregadas sobre todas las
    decisiones.

    Raises:
        ValueError: sin decisiones o con una decisión sin conteo medido
    """
    if not decisions:
        raise ValueError("flop_report requiere al menos una decisión")
    if any(dec.multiplies is None for dec in decisions):
        raise ValueError("Todas las decisiones deben traer el conteo del kernel instrumentado")
    omega_sa = len(decisions) * flops_sa(n, d, d_m)
    formula = sum(
        flops_psa(n, d, d_m, dec.measured_alpha, dec.measured_lambda, mode) for dec in decisions
    )
    zeros = sum(int(np.count_nonzero(dec.mask == 0)) for dec in decisions)
    entries = sum(dec.mask.size for dec in decisions)
    return FlopReport(
        n=n,
        d=d,
        d_m=d_m,
        alpha=float(np.mean([dec.measured_alpha for dec in decisions])),
        lambda_=zeros / entries if entries else 0.0,
        omega_sa=omega_sa,
        omega_psa_formula=formula,
        omega_psa_measured=sum(int(dec.multiplies) for dec in decisions),
    )


def nominal_mask(n: int, alpha: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Decisión determinista que realiza las tasas nominales

    kept = round((1 - alpha) N) queries (las primeras) y
    nnz = round((1 - lambda) kept N) entradas conservadas: primero la columna
    0 de cada fila, luego en orden row-major.
    """
    kept = max(1, int(round((1.0 - alpha) * n)))
    nnz = max(kept, int(round((1.0 - lam) * kept * n)))
    mask = np.zeros((kept, n))
    mask[:, 0] = 1.0
    flat = mask.reshape(-1)
    flat[np.flatnonzero(flat == 0.0)[: nnz - kept]] = 1.0
    return np.arange(kept), mask


def report_from_rates(
    n: int, d: int, d_m: int, alpha: float, lam: float, mode: FlopMode = FlopMode.KEPT_FRACTION
) -> FlopReport:
    """
    Reporte de una cabeza a partir de tasas nominales

    El conteo medido ejecuta el kernel instrumentado sobre la decisión de
    nominal_mask, así que puede diferir de la fórmula cuando las tasas no son
    alcanzables exactamente con ese N.
    """
    formula = flops_psa(n, d, d_m, alpha, lam, mode)
    kept, mask = nominal_mask(n, alpha, lam)
    features = np.zeros((n, d))
    projection = np.zeros((d, d_m))
    _, _, measured = pruned_attention_kernel(features, projection, projection, projection, kept, mask)
    return FlopReport(
        n=n,
        d=d,
        d_m=d_m,
        alpha=alpha,
        lambda_=lam,
        omega_sa=flops_sa(n, d, d_m),
        omega_psa_formula=formula,
        omega_psa_measured=measured,
    )
