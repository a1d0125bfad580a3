"""
Dataset de segmentación en disco

Estructura del directorio:
    index.txt              una línea por muestra: "<nombre> <split>"
    images/<nombre>.ptn    imagen C x H x W (PTN1)
    masks/<nombre>.ptn     máscara H x W (PTN1, etiquetas enteras como f64)
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence, Union

import numpy as np
import pandas as pd

from ..models.apformer_models import SegSample
from ..utils.config import logger
from ..utils.tensor_io import read_tensor, write_tensor


SPLITS = ("train", "val", "test")
INDEX_FILE = "index.txt"


@dataclass
class SegDataset:
    """Lote completo de muestras en memoria"""
    images: np.ndarray
    masks: np.ndarray
    names: List[str]
    splits: List[str]

    def __post_init__(self):
        if len(self.images) != len(self.masks) or len(self.images) != len(self.names):
            raise ValueError("images, masks y names deben tener la misma longitud")
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise ValueError(f"Splits desconocidos: {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[SegSample]:
        for i in range(len(self)):
            yield SegSample(image=self.images[i], mask=self.masks[i], name=self.names[i])

    def subset(self, split: str) -> "SegDataset":
        if split not in SPLITS:
            raise ValueError(f"Split desconocido: {split}")
        rows = [i for i, s in enumerate(self.splits) if s == split]
        return SegDataset(
            images=self.images[rows],
            masks=self.masks[rows],
            names=[self.names[i] for i in rows],
            splits=[split] * len(rows),
        )

    @classmethod
    def from_samples(cls, samples: Sequence[SegSample], splits: Sequence[str], classes: int = 2) -> "SegDataset":
        if not samples:
            raise ValueError("El dataset no puede estar vacío")
        for sample in samples:
            sample.validate(classes)
        return cls(
            images=np.stack([s.image for s in samples]).astype(np.float64),
            masks=np.stack([s.mask for s in samples]).astype(np.int64),
            names=[s.name for s in samples],
            splits=list(splits),
        )


def save_dataset(dataset: SegDataset, out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    for sample in dataset:
        write_tensor(out_dir / "images" / f"{sample.name}.ptn", sample.image)
        write_tensor(out_dir / "masks" / f"{sample.name}.ptn", sample.mask)
    index = pd.DataFrame({"name": dataset.names, "split": dataset.splits})
    index.to_csv(out_dir / INDEX_FILE, sep=" ", header=False, index=False)
    return out_dir


def load_dataset(data_dir: Union[str, Path]) -> SegDataset:
    """
    Cargar un dataset guardado con save_dataset

    Raises:
        FileNotFoundError: si falta index.txt
    """
    data_dir = Path(data_dir)
    index_path = data_dir / INDEX_FILE
    if not index_path.exists():
        raise FileNotFoundError(f"Dataset no encontrado: {index_path}")
    index = pd.read_csv(index_path, sep=" ", header=None, names=["name", "split"], dtype=str)
    if index.empty:
        raise ValueError(f"Dataset vacío: {index_path}")

    images = [read_tensor(data_dir / "images" / f"{name}.ptn") for name in index["name"]]
    masks = [read_tensor(data_dir / "masks" / f"{name}.ptn") for name in index["name"]]
    logger.info(f"Dataset cargado de {data_dir}: {len(index)} muestras")
    return SegDataset(
        images=np.stack(images),
        masks=np.rint(np.stack(masks)).astype(np.int64),
        names=index["name"].tolist(),
        splits=index["split"].tolist(),
    )
