"""
Entrenamiento del modelo de segmentación

FLUJO POR RONDA (una ronda = un paso de Adam sobre un lote):
1. Tomar el siguiente lote del split train (permutación sembrada por pasada)
2. Aumento de datos opcional
3. Forward con la poda activa solo después del calentamiento
4. Pérdida total; si no es finita se guarda el lote y se aborta
5. Backward y paso de Adam (g congelado durante el calentamiento)
6. Registrar el historial: pérdidas, Dice del lote, alpha, lambda y FLOPs SA

Autor: Sistema APFormer Toy
Fecha: 2026-10-17
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np
import pandas as pd

from ..analysis.metrics import metrics
from ..core.optim import Adam
from ..core.tensor import Tensor
from ..data.augment import augment_batch
from ..data.dataset_io import SegDataset
from ..models.apformer_models import ModelConfig, TrainConfig
from ..utils.config import Config, logger
from ..utils.tensor_io import write_tensor
from .checkpoint import save_checkpoint
from .losses import total_loss
from .network import SegModel


HISTORY_COLUMNS = ["round", "l_seg", "l_ssa", "l_g", "dice", "alpha", "lambda", "sa_flops"]
HISTORY_FLOAT_FORMAT = "%.6f"


class NonFiniteLossError(RuntimeError):
    """La pérdida dejó de ser finita durante el entrenamiento"""


@dataclass
class TrainResult:
    model: SegModel
    history: pd.DataFrame
    checkpoint_dir: Optional[Path]
    completed_rounds: int


class Trainer:
    """
    Orquestador del entrenamiento

    Ejemplo de uso:
        trainer = Trainer(config, dataset, out_dir="runs/toy")
        result = trainer.train()
    """

    def __init__(
        self,
        config: Config,
        dataset: SegDataset,
        out_dir: Optional[Union[str, Path]] = None,
        model: Optional[SegModel] = None,
    ):
        self.config = config
        self.train_config = TrainConfig.from_config(config)
        self.model_config = ModelConfig.from_config(config)
        self.dataset = dataset.subset("train") if "train" in dataset.splits else dataset
        if len(self.dataset) == 0:
            raise ValueError("El dataset de entrenamiento está vacío")
        self.out_dir = Path(out_dir) if out_dir is not None else None

        seed = self.train_config.seed
        self.model = model or SegModel(self.model_config, seed=seed)
        self.rng = np.random.default_rng([seed, 1])
        self.optimizer = Adam(self.model.params, lr=self.train_config.lr)
        self.history_rows: List[dict] = []

    def _batches(self) -> Iterator[np.ndarray]:
        """Índices de lote sin reemplazo; se re-mezcla al terminar cada pasada"""
        size = min(self.train_config.batch_size, len(self.dataset))
        while True:
            order = self.rng.permutation(len(self.dataset))
            for start in range(0, len(order) - size + 1, size):
                yield order[start:start + size]

    def _dump_batch(self, images: np.ndarray, masks: np.ndarray, round_index: int) -> Optional[Path]:
        if self.out_dir is None:
            logger.warning(f"Ronda {round_index}: lote no finito sin volcar (el Trainer no tiene out_dir)")
            return None
        dump_dir = self.out_dir / "nonfinite_batch"
        write_tensor(dump_dir / "images.ptn", images)
        write_tensor(dump_dir / "masks.ptn", masks)
        (dump_dir / "round.txt").write_text(f"{round_index}\n", encoding="utf-8")
        return dump_dir

    def train_round(self, round_index: int, indices: np.ndarray) -> dict:
        cfg = self.model_config
        warmup = round_index <= cfg.prune.g_frozen_rounds
        pruning_active = cfg.prune.any_enabled and not warmup

        images = self.dataset.images[indices]
        masks = self.dataset.masks[indices]
        if self.train_config.augment:
            images, masks = augment_batch(images, masks, self.rng)

        logits, diagnostics = self.model.forward(Tensor(images), pruning_active=pruning_active)
        loss, breakdown = total_loss(
            logits,
            masks,
            diagnostics,
            cfg.ssa,
            self.model.patch_masks(masks),
            self.train_config.seg_ce_weight,
            self.train_config.seg_dice_weight,
        )
        if not np.isfinite(breakdown.total):
            dump_dir = self._dump_batch(images, masks, round_index)
            raise NonFiniteLossError(
                f"Pérdida no finita en la ronda {round_index} ({breakdown}); lote guardado en {dump_dir}"
            )

        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step(frozen=self.model.g_names() if warmup else ())

        report = self.model.flop_report(diagnostics)
        batch_dice = metrics(logits.data.argmax(axis=1), masks).dice
        return {
            "round": round_index,
            "l_seg": breakdown.l_seg,
            "l_ssa": breakdown.l_ssa_total,
            "l_g": breakdown.l_g_total,
            "dice": batch_dice,
            "alpha": report.alpha,
            "lambda": report.lambda_,
            "sa_flops": report.omega_psa_measured,
        }

    def train(self, rounds: Optional[int] = None) -> TrainResult:
        """
        Ejecutar el entrenamiento completo

        Returns:
            TrainResult con el modelo, el historial y el checkpoint (si hay out_dir)
        """
        total_rounds = self.train_config.rounds if rounds is None else rounds
        frozen = self.model_config.prune.g_frozen_rounds
        logger.info(
            f"🚀 Entrenamiento: {total_rounds} rondas, lote {self.train_config.batch_size}, "
            f"lr {self.train_config.lr}, calentamiento {frozen} rondas"
        )

        batches = self._batches()
        for round_index in range(1, total_rounds + 1):
            row = self.train_round(round_index, next(batches))
            self.history_rows.append(row)
            if round_index == frozen + 1 and self.model_config.prune.any_enabled:
                logger.info(f"Fin del calentamiento en la ronda {round_index}: poda activa")
            if round_index % self.train_config.log_every == 0 or round_index == total_rounds:
                logger.info(
                    f"Ronda {round_index}: l_seg={row['l_seg']:.4f} l_ssa={row['l_ssa']:.4f} "
                    f"l_g={row['l_g']:.4f} dice={row['dice']:.4f} alpha={row['alpha']:.3f} "
                    f"lambda={row['lambda']:.3f} sa_flops={row['sa_flops']}"
                )

        history = pd.DataFrame(self.history_rows, columns=HISTORY_COLUMNS)
        checkpoint_dir = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            write_history(history, self.out_dir / "history.csv")
            checkpoint_dir = save_checkpoint(
                self.model, self.config, self.out_dir / "checkpoint", completed_rounds=total_rounds
            )
        logger.info("✅ Entrenamiento completado")
        return TrainResult(self.model, history, checkpoint_dir, total_rounds)


def write_history(history: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    history.to_csv(path, index=False, float_format=HISTORY_FLOAT_FORMAT)
    return path


def train(dataset: SegDataset, config: Config, out_dir: Optional[Union[str, Path]] = None) -> TrainResult:
    return Trainer(config, dataset, out_dir).train()
