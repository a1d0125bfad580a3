"""
Aumento de datos a escala de juguete

Geometría (rotaciones de 90°, volteos) se aplica igual a imagen y máscara;
contraste y gamma solo a la imagen. Las imágenes quedan en [0, 1].
"""

from typing import Tuple

import numpy as np


CONTRAST_RANGE = (0.8, 1.2)
GAMMA_RANGE = (0.8, 1.25)


def augment_sample(
    image: np.ndarray, mask: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Args:
        image: C x H x W en [0, 1]
        mask: H x W
    """
    square = image.shape[-1] == image.shape[-2]
    turns = int(rng.integers(4)) if square else 2 * int(rng.integers(2))
    image = np.rot90(image, turns, axes=(-2, -1))
    mask = np.rot90(mask, turns, axes=(-2, -1))
    if rng.random() < 0.5:
        image, mask = image[..., ::-1], mask[..., ::-1]
    if rng.random() < 0.5:
        image, mask = image[..., ::-1, :], mask[..., ::-1, :]

    mean = image.mean()
    image = mean + (image - mean) * rng.uniform(*CONTRAST_RANGE)
    image = np.clip(image, 0.0, 1.0) ** rng.uniform(*GAMMA_RANGE)
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def augment_batch(
    images: np.ndarray, masks: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    pairs = [augment_sample(image, mask, rng) for image, mask in zip(images, masks)]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
