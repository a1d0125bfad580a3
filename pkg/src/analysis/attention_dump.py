"""
Volcado de matrices de atención como imágenes PGM

Por bloque y cabeza se escriben tres archivos P5 de 8 bits:
    block{b}_head{h}_raw.pgm      A sin poda (N x N)
    block{b}_head{h}_pruned.pgm   A_p' re-normalizada, filas podadas en cero
    block{b}_head{h}_mask.pgm     máscara M (bilevel 0/255)

Cada matriz se escala linealmente de [min, max] a [0, 255]; la máscara usa
la escala fija [0, 1]. manifest.txt registra la escala de cada archivo y,
para las matrices podadas, el rango de sumas de las filas conservadas.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd

from ..core.tensor import Tensor, no_grad
from ..segmentation.checkpoint import load_checkpoint, pruning_active_for
from ..utils.config import logger


MANIFEST_FILE = "manifest.txt"


def scale_to_bytes(matrix: np.ndarray, low: float, high: float) -> np.ndarray:
    if high <= low:
        return np.zeros(matrix.shape, dtype=np.uint8)
    scaled = np.rint((matrix - low) / (high - low) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_pgm(path: Union[str, Path], pixels: np.ndarray) -> Path:
    path = Path(path)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    path.write_bytes(header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Leer un PGM P5 escrito por write_pgm"""
    blob = Path(path).read_bytes()
    magic, size, maxval, payload = blob.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"PGM no soportado: {path}")
    width, height = (int(v) for v in size.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def _scatter_rows(rows: np.ndarray, kept: np.ndarray, n: int) -> np.ndarray:
    full = np.zeros((n, rows.shape[1]))
    full[kept] = rows
    return full


def dump_attention(
    checkpoint_dir: Union[str, Path], sample: np.ndarray, out_dir: Union[str, Path]
) -> List[Path]:
    """
    Escribir los PGM de atención antes y después de la poda para una imagen

    Args:
        checkpoint_dir: directorio del checkpoint
        sample: imagen C x H x W
        out_dir: directorio de salida

    Returns:
        Lista de archivos PGM escritos (bloques x cabezas x 3)
    """
    model, config = load_checkpoint(checkpoint_dir)
    pruning_active = pruning_active_for(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    images = Tensor(np.asarray(sample, dtype=np.float64)[None])
    with no_grad():
        _, raw_diag = model.forward(images, pruning_active=False)
        _, pruned_diag = model.forward(images, pruning_active=pruning_active)

    written: List[Path] = []
    manifest: List[Tuple] = []
    for b, (raw_block, pruned_block) in enumerate(zip(raw_diag.blocks[0], pruned_diag.blocks[0])):
        n = raw_block.num_patches
        kept = pruned_block.kept_indices
        for h, raw in enumerate(raw_block.attention):
            stem = f"block{b}_head{h}"
            raw_matrix = raw.data
            renormed = pruned_block.renormed[h]
            kept_rows = (renormed if renormed is not None else pruned_block.attention[h]).data
            pruned_matrix = _scatter_rows(kept_rows, kept, n)
            mask_matrix = _scatter_rows(pruned_block.decisions[h].mask, kept, n)
            row_sums = kept_rows.sum(axis=1)

            entries = [
                ("raw", raw_matrix, raw_matrix.min(), raw_matrix.max()),
                ("pruned", pruned_matrix, pruned_matrix.min(), pruned_matrix.max()),
                ("mask", mask_matrix, 0.0, 1.0),
            ]
            for kind, matrix, low, high in entries:
                path = write_pgm(out_dir / f"{stem}_{kind}.pgm", scale_to_bytes(matrix, low, high))
                written.append(path)
                is_pruned = kind == "pruned"
                manifest.append(
                    (
                        path.name,
                        float(low),
                        float(high),
                        float(row_sums.min()) if is_pruned else np.nan,
                        float(row_sums.max()) if is_pruned else np.nan,
                        len(kept),
                    )
                )

    table = pd.DataFrame(
        manifest, columns=["file", "scale_min", "scale_max", "rowsum_min", "rowsum_max", "kept"]
    )
    table.to_csv(out_dir / MANIFEST_FILE, sep=" ", index=False, float_format="%.9g", na_rep="-")
    logger.info(f"📊 {len(written)} matrices de atención escritas en {out_dir}")
    return written
