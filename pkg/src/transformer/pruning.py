"""
Poda adaptativa en dos etapas

1. Poda por query: una compuerta aprendible clasifica cada parche como
   fondo/primer plano; solo las queries con G_b < tau_q calculan atención.
2. Poda por dependencia: en cada fila conservada se descartan las entradas
   por debajo de un umbral adaptativo T_i y la fila se re-normaliza:

       T_i   = min(A_i) + (max(A_i) - min(A_i)) * sigmoid(W_t . Q_i) * sigmoid(g)
       A'_ij = M_ij exp(A_ij) / (1e-6 + sum_k M_ik exp(A_ik))

La máscara M no recibe gradiente en modo `hard`; en modo `sigmoid` el valor
del forward sigue siendo la máscara dura y el gradiente pasa por
sigmoid((A - T) / temperatura) hacia T (y por ende W_t y g).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.tensor import ShapeError, Tensor, concat, parameter, scatter_rows, straight_through
from ..models.apformer_models import MaskGrad, PruneConfig, PruneDecision

if TYPE_CHECKING:
    from .attention import AttentionHeadParams


RENORM_EPS = 1e-6
LOG_CLAMP = 1e-12


@dataclass
class GateParams:
    """Vectores W_b, W_f (dimensión d) de la compuerta fondo/primer plano"""
    w_b: Tensor
    w_f: Tensor

    def __post_init__(self):
        if self.w_b.shape != self.w_f.shape or self.w_b.ndim != 1:
            raise ShapeError(f"W_b {self.w_b.shape} y W_f {self.w_f.shape} deben ser vectores iguales")

    @classmethod
    def create(cls, d: int, rng: np.random.Generator, prefix: str = "gate") -> "GateParams":
        scale = np.sqrt(1.0 / d)
        return cls(
            w_b=parameter(rng.normal(0.0, scale, d), name=f"{prefix}.w_b"),
            w_f=parameter(rng.normal(0.0, scale, d), name=f"{prefix}.w_f"),
        )


def gate_scores(features: Tensor, gate: GateParams) -> Tuple[Tensor, Tensor]:
    """(G_b, G_f) por parche con softmax de dos clases; G_f = 1 - G_b"""
    if features.ndim != 2 or features.shape[1] != gate.w_b.shape[0]:
        raise ShapeError(f"gate_scores: features {features.shape} con W_b {gate.w_b.shape}")
    column = (gate.w_b.shape[0], 1)
    logits = concat([features @ gate.w_b.reshape(column), features @ gate.w_f.reshape(column)], axis=1)
    g_b = logits.softmax(axis=1)[:, 0]
    return g_b, 1.0 - g_b


def gate_loss(g_b: Tensor, g_f: Tensor, patch_mask: np.ndarray) -> Tensor:
    """Entropía cruzada media entre la compuerta y la máscara de parches (1 = primer plano)"""
    patch_mask = np.asarray(patch_mask, dtype=np.float64).reshape(-1)
    if patch_mask.shape[0] != g_b.shape[0]:
        raise ValueError(f"patch_mask tiene {patch_mask.shape[0]} parches, se esperaban {g_b.shape[0]}")
    background = Tensor(1.0 - patch_mask)
    foreground = Tensor(patch_mask)
    log_b = g_b.maximum(LOG_CLAMP).log()
    log_f = g_f.maximum(LOG_CLAMP).log()
    return -(background * log_b + foreground * log_f).mean()


def select_queries(
    features: Tensor,
    g_b: Union[Tensor, np.ndarray],
    config: PruneConfig,
    warmup_active: bool,
) -> Tuple[Tensor, np.ndarray]:
    """
    Conservar las queries con G_b < tau_q

    Nunca devuelve un conjunto vacío: si todas serían podadas se conserva
    el parche con menor G_b.
    """
    scores = g_b.data if isinstance(g_b, Tensor) else np.asarray(g_b, dtype=np.float64)
    n = features.shape[0]
    if warmup_active or not config.enable_query_prune:
        return features, np.arange(n)
    kept = np.flatnonzero(scores < config.tau_q)
    if kept.size == 0:
        kept = np.array([int(np.argmin(scores))])
    return features[kept], kept


def pruned_attention_logits(
    features_pruned: Tensor,
    features: Tensor,
    head: "AttentionHeadParams",
    bias_rows: Optional[Tensor],
    return_queries: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    A_p = softmax_filas(Q_p Kᵀ / sqrt(d_m) + P[filas conservadas]); kept x N

    `bias_rows` ya debe venir recortado a las filas conservadas.
    """
    from .attention import attention_scores

    if features_pruned.shape[0] == 0:
        raise ValueError("Conjunto de queries conservadas vacío")
    attention, queries = attention_scores(features_pruned, features, head, bias_rows)
    if return_queries:
        return attention, queries
    return attention


def adaptive_thresholds(attention: Tensor, queries: Tensor, w_t: Tensor, g: Tensor) -> Tensor:
    """Umbral T_i por fila conservada; filas uniformes dan T = min (no se poda nada)"""
    if queries.shape[0] != attention.shape[0]:
        raise ShapeError(f"Q {queries.shape} y A_p {attention.shape} no comparten filas")
    row_min = attention.min(axis=1)
    row_max = attention.max(axis=1)
    query_gate = (queries @ w_t.reshape(w_t.shape[0], 1)).reshape(queries.shape[0]).sigmoid()
    return row_min + (row_max - row_min) * query_gate * g.sigmoid()


def apply_mask_renorm(
    attention: Tensor,
    thresholds: Tensor,
    mask_grad: MaskGrad = MaskGrad.HARD,
    temperature: float = 0.05,
) -> Tuple[Tensor, np.ndarray]:
    """
    Enmascarar entradas bajo el umbral y re-normalizar cada fila

    Returns:
        (A_p', M) con M binaria (1 = dependencia conservada)
    """
    if thresholds.shape != (attention.shape[0],):
        raise ShapeError(f"T {thresholds.shape} no coincide con A_p {attention.shape}")
    column_t = thresholds.reshape(attention.shape[0], 1)
    mask = (attention.data >= column_t.data).astype(np.float64)
    # el máximo de cada fila sobrevive siempre
    mask[np.arange(mask.shape[0]), attention.data.argmax(axis=1)] = 1.0

    if MaskGrad(mask_grad) is MaskGrad.SIGMOID:
        soft = ((attention - column_t) * (1.0 / temperature)).sigmoid()
        mask_tensor = straight_through(mask, soft)
    else:
        mask_tensor = Tensor(mask)

    weights = mask_tensor * attention.exp()
    renormed = weights / (weights.sum(axis=1, keepdims=True) + RENORM_EPS)
    return renormed, mask


def scatter_back(
    head_outputs: Sequence[Tensor], kept_indices: np.ndarray, features: Tensor, w_msa: Tensor
) -> Tensor:
    """
    Devolver las queries conservadas a la secuencia completa

    Filas conservadas: residual + concat(cabezas) W_msa. Filas podadas: la
    entrada del bloque sin cambios.
    """
    kept_indices = np.asarray(kept_indices, dtype=np.int64)
    n = features.shape[0]
    if len(kept_indices) and (kept_indices.min() < 0 or kept_indices.max() >= n):
        raise IndexError(f"Índices conservados fuera de [0, {n})")
    combined = concat(list(head_outputs), axis=1) @ w_msa
    return features + scatter_rows(combined, kept_indices, n)


def measure_rates(decision: PruneDecision, n: int) -> Tuple[float, float]:
    """(alpha, lambda): fracción de queries podadas y de ceros en M"""
    alpha = 1.0 - decision.kept / n
    mask = np.asarray(decision.mask)
    lam = float(np.count_nonzero(mask == 0)) / mask.size if mask.size else 0.0
    return alpha, lam


def make_decision(
    kept_indices: np.ndarray,
    mask: np.ndarray,
    thresholds: np.ndarray,
    n: int,
    multiplies: Optional[int] = None,
) -> PruneDecision:
    decision = PruneDecision(
        kept_indices=np.asarray(kept_indices, dtype=np.int64),
        mask=mask,
        thresholds=thresholds,
        measured_alpha=0.0,
        measured_lambda=0.0,
        multiplies=multiplies,
    )
    decision.measured_alpha, decision.measured_lambda = measure_rates(decision, n)
    return decision
