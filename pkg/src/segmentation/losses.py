"""
Objetivo de entrenamiento combinado

total = l_seg + l_ssa_total + l_g_total (pesos unitarios)

- l_seg: 0.5 * entropía cruzada por píxel + 0.5 * Dice suave (clases de primer plano)
- l_ssa_total: suma por bloque y cabeza de la pérdida SSA
- l_g_total: suma por bloque con compuerta de la entropía cruzada de la compuerta

Los términos de atención se calculan por muestra y se promedian sobre el lote.
"""

from typing import Optional, Tuple

import numpy as np

from ..core.tensor import ShapeError, Tensor
from ..models.apformer_models import LossBreakdown, SsaConfig
from ..transformer.pruning import gate_loss
from ..transformer.ssa_losses import ssa_loss
from .network import ModelDiagnostics


DICE_SMOOTH = 1.0


def one_hot(masks: np.ndarray, classes: int) -> np.ndarray:
    """B x H x W enteros -> B x clases x H x W"""
    masks = np.asarray(masks, dtype=np.int64)
    if masks.min() < 0 or masks.max() >= classes:
        raise ValueError(f"Etiquetas fuera de [0, {classes})")
    encoded = np.zeros((masks.shape[0], classes) + masks.shape[1:])
    np.put_along_axis(encoded, masks[:, None], 1.0, axis=1)
    return encoded


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Entropía cruzada media por píxel; targets one-hot B x clases x H x W"""
    log_probs = logits.log_softmax(axis=1)
    return -(log_probs * Tensor(targets)).sum(axis=1).mean()


def soft_dice_loss(logits: Tensor, targets: np.ndarray, smooth: float = DICE_SMOOTH) -> Tensor:
    """1 - Dice suave promedio sobre las clases de primer plano (lote completo)"""
    probs = logits.softmax(axis=1)
    classes = logits.shape[1]
    scores = []
    for c in range(1, classes):
        prob_c = probs[:, c]
        target_c = Tensor(targets[:, c])
        intersection = (prob_c * target_c).sum()
        denominator = prob_c.sum() + float(targets[:, c].sum())
        scores.append((intersection * 2.0 + smooth) / (denominator + smooth))
    mean_score = scores[0]
    for score in scores[1:]:
        mean_score = mean_score + score
    return 1.0 - mean_score * (1.0 / len(scores))


def segmentation_loss(
    logits: Tensor, masks: np.ndarray, ce_weight: float = 0.5, dice_weight: float = 0.5
) -> Tuple[Tensor, float, float]:
    """Devuelve (l_seg, valor CE, valor Dice-loss)"""
    if logits.ndim != 4 or logits.shape[0] != masks.shape[0] or logits.shape[2:] != masks.shape[1:]:
        raise ShapeError(f"logits {logits.shape} incompatibles con máscaras {masks.shape}")
    targets = one_hot(masks, logits.shape[1])
    ce = cross_entropy(logits, targets)
    dice = soft_dice_loss(logits, targets)
    return ce * ce_weight + dice * dice_weight, ce.item(), dice.item()


def attention_losses(
    diagnostics: ModelDiagnostics,
    ssa_config: SsaConfig,
    patch_masks: Optional[np.ndarray],
) -> Tuple[Tensor, Tensor]:
    """(l_ssa_total, l_g_total) promediados sobre las muestras del lote"""
    samples = len(diagnostics.blocks)
    ssa_total = Tensor(0.0)
    gate_total = Tensor(0.0)
    for sample, blocks in enumerate(diagnostics.blocks):
        for block in blocks:
            if ssa_config.enabled:
                # orden fijo de cabezas
                for attention in block.attention:
                    ssa_total = ssa_total + ssa_loss(attention, ssa_config, block.kept_indices)
            if block.g_b is not None and patch_masks is not None:
                gate_total = gate_total + gate_loss(block.g_b, block.g_f, patch_masks[sample])
    scale = 1.0 / max(samples, 1)
    return ssa_total * scale, gate_total * scale


def total_loss(
    logits: Tensor,
    masks: np.ndarray,
    diagnostics: ModelDiagnostics,
    ssa_config: SsaConfig,
    patch_masks: Optional[np.ndarray],
    ce_weight: float = 0.5,
    dice_weight: float = 0.5,
) -> Tuple[Tensor, LossBreakdown]:
    """
    Pérdida total y su desglose

    Returns:
        (Tensor escalar diferenciable, LossBreakdown con los valores)
    """
    l_seg, _, _ = segmentation_loss(logits, masks, ce_weight, dice_weight)
    l_ssa, l_g = attention_losses(diagnostics, ssa_config, patch_masks)
    total = l_seg + l_ssa + l_g
    breakdown = LossBreakdown(
        l_seg=l_seg.item(),
        l_ssa_total=l_ssa.item(),
        l_g_total=l_g.item(),
        total=total.item(),
    )
    return total, breakdown
