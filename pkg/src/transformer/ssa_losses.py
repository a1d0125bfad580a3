"""
Pérdidas auto-supervisadas sobre la matriz de atención (SSA)

- Simetría: coseno entre A y Aᵀ (norma de Frobenius); se penaliza
  max(1 - score - alpha_sym, 0).
- Entropía: entropía normalizada por fila, -sum p log2 p / log2 N; se penaliza
  max(min_i E_i - alpha_en, 0) (o la media, según configuración).
- SSA: beta_1 * simetría + beta_2 * entropía.

Los hinges usan subgradiente 0 en el punto de quiebre.
"""

from typing import Optional

import numpy as np

from ..core.tensor import ShapeError, Tensor
from ..models.apformer_models import EntropyReduction, SsaConfig


LOG_CLAMP = 1e-12


def _check_square(attention: Tensor) -> None:
    if attention.ndim != 2 or attention.shape[0] != attention.shape[1]:
        raise ShapeError(f"Se esperaba una matriz cuadrada, shape {attention.shape}")


def symmetry_score(attention: Tensor) -> Tensor:
    """
    sum(A * Aᵀ) / (||A|| ||Aᵀ||), en [0, 1] para A no negativa

    Numerador y denominador se reducen sobre matrices simétricas, así que
    el resultado para A y para Aᵀ es idéntico bit a bit.
    """
    _check_square(attention)
    if not np.any(attention.data):
        raise ValueError("symmetry_score: la matriz de atención es toda ceros")
    transposed = attention.T
    numerator = (attention * transposed).sum()
    squares = (attention * attention + transposed * transposed).sum() * 0.5
    return numerator / squares


def sym_loss(attention: Tensor, alpha_sym: float) -> Tensor:
    return (1.0 - symmetry_score(attention) - alpha_sym).relu()


def row_entropies(attention: Tensor) -> Tensor:
    """Entropía normalizada de cada fila (vector de longitud igual a las filas)"""
    n = attention.shape[-1]
    if n < 2:
        raise ValueError("La entropía normalizada requiere N >= 2 (log2(1) = 0)")
    plogp = attention * attention.maximum(LOG_CLAMP).log()
    return -plogp.sum(axis=-1) * (1.0 / np.log(n))


def row_entropy(attention: Tensor, i: int) -> Tensor:
    if not 0 <= i < attention.shape[0]:
        raise ValueError(f"Fila {i} fuera de rango para A {attention.shape}")
    return row_entropies(attention[i:i + 1])[0]


def entropy_loss(
    attention: Tensor, alpha_en: float, reduction: EntropyReduction = EntropyReduction.MIN
) -> Tensor:
    entropies = row_entropies(attention)
    if EntropyReduction(reduction) is EntropyReduction.MEAN:
        reduced = entropies.mean()
    else:
        reduced = entropies.min()
    return (reduced - alpha_en).relu()


def ssa_loss(attention: Tensor, config: SsaConfig, kept_indices: Optional[np.ndarray] = None) -> Tensor:
    """
    beta_1 * L_sym + beta_2 * L_en

    Con poda por query `attention` es kept x N: la simetría se mide sobre el
    bloque kept x kept y la entropía sobre las filas conservadas completas.
    """
    square = attention
    if kept_indices is not None and len(kept_indices) != attention.shape[1]:
        square = attention[:, np.asarray(kept_indices, dtype=np.int64)]
    symmetric_part = sym_loss(square, config.alpha_sym)
    entropy_part = entropy_loss(attention, config.alpha_en, config.entropy_reduction)
    return symmetric_part * config.beta_1 + entropy_part * config.beta_2
