"""
Embedding de posición relativa con prior gaussiano (GRPE)

P = G + R[idx] donde:
- G[i, j] = exp(-(dfila^2 + dcol^2) / (2 theta^2)) es un mapa de calor gaussiano
  centrado en cada parche
- R es una tabla aprendible de longitud 4N indexada por el desplazamiento
  (fila, columna) entre parches

theta se parametriza como exp(theta_raw) para que sea siempre positivo.
Cada cabeza tiene su propio theta y su propia tabla (4N + 1 parámetros).
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple, Union

import numpy as np

from ..core.tensor import Tensor, parameter


Grid = Tuple[int, int]


@dataclass
class GrpeParams:
    """Parámetros GRPE de una cabeza"""
    theta_raw: Tensor
    rel_table: Tensor
    grid: Grid

    def __post_init__(self):
        expected = 4 * self.grid[0] * self.grid[1]
        if self.rel_table.shape != (expected,):
            raise ValueError(
                f"rel_table debe tener longitud 4N = {expected}, shape {self.rel_table.shape}"
            )

    @property
    def theta(self) -> Tensor:
        return self.theta_raw.exp()

    @property
    def parameter_count(self) -> int:
        return self.rel_table.size + 1

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.theta_raw": self.theta_raw, f"{prefix}.rel_table": self.rel_table}

    @classmethod
    def create(cls, grid: Grid, prefix: str = "grpe") -> "GrpeParams":
        """theta inicial max(h, w)/4, tabla en cero (arranca del prior puro)"""
        height, width = grid
        theta0 = max(height, width) / 4.0
        return cls(
            theta_raw=parameter(np.log(theta0), name=f"{prefix}.theta_raw"),
            rel_table=parameter(np.zeros(4 * height * width), name=f"{prefix}.rel_table"),
            grid=grid,
        )


def relative_index(i: int, j: int, grid: Grid) -> int:
    """
    Índice en la tabla relativa para el par de parches (i, j)

    2w(i div w - j div w + h) + (i mod w - j mod w + w); siempre en [1, 4N-1].
    """
    height, width = grid
    n = height * width
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"Par ({i}, {j}) fuera de rango para el grid {grid} (N={n})")
    return 2 * width * (i // width - j // width + height) + (i % width - j % width + width)


@lru_cache(maxsize=32)
def relative_index_matrix(grid: Grid) -> np.ndarray:
    """Matriz N x N de índices relativos (solo lectura, cacheada por grid)"""
    height, width = grid
    cells = np.arange(height * width)
    rows, cols = cells // width, cells % width
    index = 2 * width * (rows[:, None] - rows[None, :] + height) + (cols[:, None] - cols[None, :] + width)
    index.setflags(write=False)
    return index


@lru_cache(maxsize=32)
def squared_distances(grid: Grid) -> np.ndarray:
    height, width = grid
    cells = np.arange(height * width)
    rows, cols = cells // width, cells % width
    dist = (rows[None, :] - rows[:, None]) ** 2 + (cols[None, :] - cols[:, None]) ** 2
    dist = dist.astype(np.float64)
    dist.setflags(write=False)
    return dist


def gaussian_prior(grid: Grid, theta: Union[Tensor, float]) -> Tensor:
    """Mapa gaussiano N x N; diferenciable respecto a theta"""
    height, width = grid
    if height < 1 or width < 1:
        raise ValueError(f"Grid inválido: {grid}")
    theta = theta if isinstance(theta, Tensor) else Tensor(theta)
    if theta.size != 1 or not float(theta.data) > 0:
        raise ValueError(f"theta debe ser un escalar > 0, recibido {theta.data}")
    return (Tensor(-squared_distances(grid)) / (theta * theta * 2.0)).exp()


def grpe_embed(grid: Grid, params: GrpeParams) -> Tensor:
    """P = G + R[relative_index]; diferenciable respecto a theta y a la tabla"""
    prior = gaussian_prior(grid, params.theta)
    return prior + params.rel_table[relative_index_matrix(grid)]
