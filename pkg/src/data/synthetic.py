"""
Generador de datos sintéticos para el Sistema APFormer Toy

PROPÓSITO:
Este módulo genera imágenes de segmentación simuladas que reemplazan a las
lesiones de piel y órganos de los datasets reales, permitiendo entrenar y
verificar el modelo de juguete sin datos con licencia.

CARACTERÍSTICAS DE LOS DATOS SIMULADOS:
- 1 a 3 formas de primer plano por imagen (elipses, blobs o anillos)
- Contraste de intensidad fondo/primer plano + ruido gaussiano
- Máscaras binarias pareadas, fracción de primer plano en (0.02, 0.6)
- Split train/val/test 70/10/20
- Totalmente determinista dada la semilla

Autor: Sistema APFormer Toy
Fecha: 2026-10-17
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..models.apformer_models import SegSample, ShapeFamily, SyntheticSpec
from ..utils.config import logger
from .dataset_io import SegDataset, save_dataset


MIN_FOREGROUND = 0.02
MAX_FOREGROUND = 0.6
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
MAX_ATTEMPTS = 1000


class SyntheticDataGenerator:
    """
    Generador principal de muestras sintéticas

    Cada muestra usa su propio generador derivado de (seed, índice), así que
    el dataset completo y cualquier muestra aislada son reproducibles.
    """

    def __init__(self, spec: SyntheticSpec):
        """
        Inicializa el generador

        Args:
            spec: tamaño, familia de formas, ruido y semilla
        """
        self.spec = spec
        height, width = spec.image_size
        self.rows, self.cols = np.mgrid[0:height, 0:width].astype(np.float64)

    # ------------------------------------------------------------------
    # Formas
    # ------------------------------------------------------------------

    def _ellipse(self, rng: np.random.Generator) -> np.ndarray:
        height, width = self.spec.image_size
        center_r = rng.uniform(0.2, 0.8) * height
        center_c = rng.uniform(0.2, 0.8) * width
        axis_a = rng.uniform(0.06, 0.25) * height
        axis_b = rng.uniform(0.06, 0.25) * width
        angle = rng.uniform(0.0, np.pi)
        dr, dc = self.rows - center_r, self.cols - center_c
        u = dr * np.cos(angle) + dc * np.sin(angle)
        v = -dr * np.sin(angle) + dc * np.cos(angle)
        return (u / axis_a) ** 2 + (v / axis_b) ** 2 <= 1.0

    def _blob(self, rng: np.random.Generator) -> np.ndarray:
        height, width = self.spec.image_size
        field = np.zeros(self.spec.image_size)
        center_r = rng.uniform(0.25, 0.75) * height
        center_c = rng.uniform(0.25, 0.75) * width
        for _ in range(int(rng.integers(2, 5))):
            r = center_r + rng.normal(0.0, 0.08) * height
            c = center_c + rng.normal(0.0, 0.08) * width
            sigma = rng.uniform(0.05, 0.12) * min(height, width)
            field += np.exp(-((self.rows - r) ** 2 + (self.cols - c) ** 2) / (2.0 * sigma**2))
        return field >= 0.5

    def _ring(self, rng: np.random.Generator) -> np.ndarray:
        height, width = self.spec.image_size
        center_r = rng.uniform(0.25, 0.75) * height
        center_c = rng.uniform(0.25, 0.75) * width
        outer = rng.uniform(0.12, 0.25) * min(height, width)
        inner = outer * rng.uniform(0.4, 0.7)
        radius = np.hypot(self.rows - center_r, self.cols - center_c)
        return (radius <= outer) & (radius >= inner)

    def _shape(self, rng: np.random.Generator) -> np.ndarray:
        family = self.spec.family
        if family is ShapeFamily.BLOBS:
            return self._blob(rng)
        if family is ShapeFamily.RINGS:
            return self._ring(rng)
        return self._ellipse(rng)

    # ------------------------------------------------------------------
    # Muestras
    # ------------------------------------------------------------------

    def generate_mask(self, rng: np.random.Generator) -> np.ndarray:
        """Máscara con 1-3 formas y fracción de primer plano válida"""
        for _ in range(MAX_ATTEMPTS):
            mask = np.zeros(self.spec.image_size, dtype=bool)
            for _ in range(int(rng.integers(1, 4))):
                shape = self._shape(rng)
                # formas de área cero se regeneran
                while not shape.any():
                    shape = self._shape(rng)
                mask |= shape
            fraction = mask.mean()
            if MIN_FOREGROUND < fraction < MAX_FOREGROUND:
                return mask
        raise RuntimeError(f"No se pudo generar una máscara válida en {MAX_ATTEMPTS} intentos")

    def generate_sample(self, index: int) -> SegSample:
        rng = np.random.default_rng([self.spec.seed, index])
        mask = self.generate_mask(rng)
        background = rng.uniform(0.1, 0.35)
        foreground = rng.uniform(0.6, 0.9)
        image = np.where(mask, foreground, background)
        if self.spec.noise > 0:
            image = np.clip(image + rng.normal(0.0, self.spec.noise, image.shape), 0.0, 1.0)
        return SegSample(image=image[None], mask=mask.astype(np.int64), name=f"sample_{index:04d}")

    def generate_all(self) -> List[SegSample]:
        logger.info(f"Generando {self.spec.count} muestras sintéticas ({self.spec.family.value})")
        return [self.generate_sample(i) for i in range(self.spec.count)]


def split_assignment(count: int, seed: int) -> List[str]:
    """Asignar train/val/test en proporción 70/10/20 con permutación sembrada"""
    n_train = int(round(SPLIT_FRACTIONS[0] * count))
    n_val = int(round(SPLIT_FRACTIONS[1] * count))
    n_train = max(1, min(n_train, count))
    n_val = min(n_val, count - n_train)
    order = np.random.default_rng([seed, count]).permutation(count)
    labels = ["test"] * count
    for position, index in enumerate(order):
        if position < n_train:
            labels[index] = "train"
        elif position < n_train + n_val:
            labels[index] = "val"
    return labels


def gen_data(spec: SyntheticSpec, out_dir: Union[str, Path]) -> Tuple[Path, SegDataset]:
    """
    Generar el dataset completo y guardarlo en disco

    Returns:
        (directorio, dataset en memoria)
    """
    generator = SyntheticDataGenerator(spec)
    samples = generator.generate_all()
    splits = split_assignment(spec.count, spec.seed)
    dataset = SegDataset.from_samples(samples, splits)
    path = save_dataset(dataset, out_dir)

    fractions = dataset.masks.reshape(len(dataset), -1).mean(axis=1)
    logger.info(
        f"✅ Dataset sintético en {path}: {len(dataset)} muestras, "
        f"primer plano medio {fractions.mean():.3f}"
    )
    return path, dataset
