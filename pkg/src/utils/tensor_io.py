"""
Lectura y escritura de tensores en formato binario PTN1

Formato (little-endian):
    magic   4 bytes  b"PTN1"
    rank    u32
    dims    u32 * rank
    payload f64 * prod(dims), orden row-major

Se usa para checkpoints, fixtures de tests y el dataset sintético en disco.
"""

from pathlib import Path
from typing import Union

import numpy as np


MAGIC = b"PTN1"
_U32 = np.dtype("<u4")
_F64 = np.dtype("<f8")


class TensorFormatError(ValueError):
    """Archivo PTN1 malformado"""


def encode_tensor(array: np.ndarray) -> bytes:
    """Serializar un arreglo a bytes PTN1"""
    # rank 0 se conserva: g y theta_raw son escalares
    values = np.asarray(array, dtype=_F64)
    header = MAGIC + np.array([values.ndim], dtype=_U32).tobytes()
    header += np.array(values.shape, dtype=_U32).tobytes()
    return header + values.tobytes(order="C")


def decode_tensor(blob: bytes) -> np.ndarray:
    """
    Deserializar bytes PTN1

    Raises:
        TensorFormatError: magic incorrecto o payload de tamaño inesperado
    """
    if blob[:4] != MAGIC:
        raise TensorFormatError(f"Magic inválido: {blob[:4]!r} (se esperaba {MAGIC!r})")
    if len(blob) < 8:
        raise TensorFormatError("Archivo truncado: falta el rank")

    rank = int(np.frombuffer(blob, dtype=_U32, count=1, offset=4)[0])
    dims_end = 8 + 4 * rank
    if len(blob) < dims_end:
        raise TensorFormatError(f"Archivo truncado: faltan dims (rank={rank})")
    dims = tuple(int(d) for d in np.frombuffer(blob, dtype=_U32, count=rank, offset=8))

    expected = int(np.prod(dims, dtype=np.int64)) * _F64.itemsize
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"Payload de {len(payload)} bytes, se esperaban {expected} para shape {dims}"
        )
    return np.frombuffer(payload, dtype=_F64).reshape(dims).astype(np.float64)


def write_tensor(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    return path


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
