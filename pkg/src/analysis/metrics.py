"""
Métricas de segmentación binaria y evaluación de modelos

Métricas sobre la matriz de confusión (TP, FP, FN, TN):
- Dice = 2TP / (2TP + FP + FN)
- IoU  = TP / (TP + FP + FN)
- ACC  = (TP + TN) / total
- SE   = TP / (TP + FN)   (sensibilidad)
- SP   = TN / (TN + FP)   (especificidad)

Un denominador nulo (p. ej. máscaras vacías en ambos lados) da 1.0.
La evaluación acumula una sola matriz de confusión sobre todo el split.
"""

from typing import Tuple

import numpy as np

from ..models.apformer_models import MetricSet
from ..utils.config import logger


def confusion_counts(pred_mask: np.ndarray, true_mask: np.ndarray) -> Tuple[int, int, int, int]:
    """(TP, FP, FN, TN) para máscaras binarias (cualquier etiqueta > 0 es primer plano)"""
    pred_mask = np.asarray(pred_mask)
    true_mask = np.asarray(true_mask)
    if pred_mask.shape != true_mask.shape:
        raise ValueError(f"Shapes distintos: pred {pred_mask.shape} vs true {true_mask.shape}")
    pred = pred_mask > 0
    true = true_mask > 0
    tp = int(np.count_nonzero(pred & true))
    fp = int(np.count_nonzero(pred & ~true))
    fn = int(np.count_nonzero(~pred & true))
    tn = int(np.count_nonzero(~pred & ~true))
    return tp, fp, fn, tn


def _ratio(numerator: int, denominator: int) -> float:
    return 1.0 if denominator == 0 else numerator / denominator


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> MetricSet:
    total = tp + fp + fn + tn
    return MetricSet(
        dice=_ratio(2 * tp, 2 * tp + fp + fn),
        iou=_ratio(tp, tp + fp + fn),
        acc=_ratio(tp + tn, total),
        se=_ratio(tp, tp + fn),
        sp=_ratio(tn, tn + fp),
    )


def metrics(pred_mask: np.ndarray, true_mask: np.ndarray) -> MetricSet:
    return metrics_from_counts(*confusion_counts(pred_mask, true_mask))


def evaluate(model, dataset, pruning_active: bool, batch_size: int = 4) -> MetricSet:
    """
    Evaluar un modelo sobre un dataset completo

    Los lotes se procesan en orden y la matriz de confusión se suma en ese
    mismo orden, así que el resultado es reproducible.
    """
    if len(dataset) == 0:
        raise ValueError("No hay muestras para evaluar")
    totals = np.zeros(4, dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        images = dataset.images[start:start + batch_size]
        predictions = model.predict(images, pruning_active=pruning_active)
        totals += np.array(confusion_counts(predictions, dataset.masks[start:start + batch_size]))
    result = metrics_from_counts(*(int(v) for v in totals))
    logger.info(
        f"📊 Evaluación ({len(dataset)} muestras, poda {'activa' if pruning_active else 'inactiva'}): "
        f"dice={result.dice:.4f} iou={result.iou:.4f} acc={result.acc:.4f}"
    )
    return result
