"""
Auto-atención multi-cabeza con sesgo GRPE, combinación de cabezas y FFN

Por cabeza:  A = softmax_filas(Q Kᵀ / sqrt(d_m) + P),  F_sa = A V
Bloque:      F_msa = concat(cabezas) W_msa + F_p
             F_ffn = ReLU(F_msa W_1 + b_1) W_2 + b_2 + F_msa
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.tensor import ShapeError, Tensor, concat, parameter
from .grpe import Grid, GrpeParams
from .pruning import GateParams


@dataclass
class PatchSequence:
    """Mapa de características tokenizado: N x d con su grid (h, w)"""
    features: Tensor
    grid: Grid

    def __post_init__(self):
        n = self.grid[0] * self.grid[1]
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ShapeError(f"PatchSequence: features {self.features.shape} para grid {self.grid}")

    @property
    def num_patches(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class AttentionHeadParams:
    """Proyecciones E_q, E_k, E_v (d x d_m), GRPE y vector W_t de umbrales"""
    e_q: Tensor
    e_k: Tensor
    e_v: Tensor
    w_t: Tensor
    grpe: Optional[GrpeParams] = None

    def __post_init__(self):
        shapes = {self.e_q.shape, self.e_k.shape, self.e_v.shape}
        if len(shapes) != 1 or self.e_q.ndim != 2:
            raise ShapeError(
                f"E_q, E_k, E_v deben compartir d x d_m: {self.e_q.shape}, {self.e_k.shape}, {self.e_v.shape}"
            )
        if self.w_t.shape != (self.d_m,):
            raise ShapeError(f"W_t {self.w_t.shape} no coincide con d_m = {self.d_m}")

    @property
    def d_m(self) -> int:
        return self.e_q.shape[1]

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        params = {
            f"{prefix}.e_q": self.e_q,
            f"{prefix}.e_k": self.e_k,
            f"{prefix}.e_v": self.e_v,
            f"{prefix}.w_t": self.w_t,
        }
        if self.grpe is not None:
            params.update(self.grpe.named_parameters(f"{prefix}.grpe"))
        return params

    @classmethod
    def create(
        cls, d: int, d_m: int, grid: Grid, rng: np.random.Generator, use_grpe: bool = True, prefix: str = "head"
    ) -> "AttentionHeadParams":
        scale = np.sqrt(1.0 / d)
        return cls(
            e_q=parameter(rng.normal(0.0, scale, (d, d_m)), name=f"{prefix}.e_q"),
            e_k=parameter(rng.normal(0.0, scale, (d, d_m)), name=f"{prefix}.e_k"),
            e_v=parameter(rng.normal(0.0, scale, (d, d_m)), name=f"{prefix}.e_v"),
            w_t=parameter(rng.normal(0.0, np.sqrt(1.0 / d_m), d_m), name=f"{prefix}.w_t"),
            grpe=GrpeParams.create(grid, prefix=f"{prefix}.grpe") if use_grpe else None,
        )


@dataclass
class TransformerBlockParams:
    """Parámetros de un bloque: cabezas, W_msa, FFN, compuerta y escalar g"""
    heads: List[AttentionHeadParams]
    w_msa: Tensor
    w_1: Tensor
    b_1: Tensor
    w_2: Tensor
    b_2: Tensor
    gate: GateParams
    g: Tensor = field(default_factory=lambda: parameter(-2.0, name="g"))

    def __post_init__(self):
        if not self.heads:
            raise ValueError("Un bloque necesita al menos una cabeza")
        d = self.w_1.shape[0]
        d_ff = self.w_1.shape[1]
        if d_ff < d:
            raise ValueError(f"d_ff ({d_ff}) debe ser >= d ({d})")
        if self.w_msa.shape != (sum(h.d_m for h in self.heads), d):
            raise ShapeError(f"W_msa {self.w_msa.shape} no coincide con {len(self.heads)} cabezas y d = {d}")

    @property
    def dim(self) -> int:
        return self.w_1.shape[0]

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for index, head in enumerate(self.heads):
            params.update(head.named_parameters(f"{prefix}.head{index}"))
        params.update(
            {
                f"{prefix}.w_msa": self.w_msa,
                f"{prefix}.w_1": self.w_1,
                f"{prefix}.b_1": self.b_1,
                f"{prefix}.w_2": self.w_2,
                f"{prefix}.b_2": self.b_2,
                f"{prefix}.gate.w_b": self.gate.w_b,
                f"{prefix}.gate.w_f": self.gate.w_f,
                f"{prefix}.g": self.g,
            }
        )
        return params

    @classmethod
    def create(
        cls,
        d: int,
        heads: int,
        d_m: int,
        d_ff: int,
        grid: Grid,
        rng: np.random.Generator,
        use_grpe: bool = True,
        g_init: float = -2.0,
        prefix: str = "block",
    ) -> "TransformerBlockParams":
        head_params = [
            AttentionHeadParams.create(d, d_m, grid, rng, use_grpe, prefix=f"{prefix}.head{i}")
            for i in range(heads)
        ]
        return cls(
            heads=head_params,
            w_msa=parameter(rng.normal(0.0, np.sqrt(1.0 / (heads * d_m)), (heads * d_m, d)), name=f"{prefix}.w_msa"),
            w_1=parameter(rng.normal(0.0, np.sqrt(2.0 / d), (d, d_ff)), name=f"{prefix}.w_1"),
            b_1=parameter(np.zeros(d_ff), name=f"{prefix}.b_1"),
            w_2=parameter(rng.normal(0.0, np.sqrt(1.0 / d_ff), (d_ff, d)), name=f"{prefix}.w_2"),
            b_2=parameter(np.zeros(d), name=f"{prefix}.b_2"),
            gate=GateParams.create(d, rng, prefix=f"{prefix}.gate"),
            g=parameter(g_init, name=f"{prefix}.g"),
        )


def _features(sequence: Union[PatchSequence, Tensor]) -> Tensor:
    return sequence.features if isinstance(sequence, PatchSequence) else sequence


def attention_scores(
    queries_from: Tensor, keys_from: Tensor, head: AttentionHeadParams, bias: Optional[Tensor]
) -> Tuple[Tensor, Tensor]:
    """
    Matriz de atención (filas = queries) y las queries proyectadas

    Compartida por la ruta sin poda y la ruta podada para que con todas las
    queries conservadas ambas hagan exactamente las mismas operaciones.
    """
    if queries_from.shape[0] == 0 or keys_from.shape[0] == 0:
        raise ValueError("La atención requiere N >= 1 parches")
    queries = queries_from @ head.e_q
    keys = keys_from @ head.e_k
    logits = (queries @ keys.T) * (1.0 / np.sqrt(head.d_m))
    if bias is not None:
        if bias.shape != logits.shape:
            raise ShapeError(f"Sesgo P {bias.shape} no coincide con los logits {logits.shape}")
        logits = logits + bias
    return logits.softmax(axis=-1), queries


def attend(
    sequence: Union[PatchSequence, Tensor], head: AttentionHeadParams, bias: Optional[Tensor]
) -> Tuple[Tensor, Tensor]:
    """Auto-atención de una cabeza; devuelve (F_sa: N x d_m, A: N x N)"""
    features = _features(sequence)
    attention, _ = attention_scores(features, features, head, bias)
    return attention @ (features @ head.e_v), attention


def multi_head_combine(head_outputs: Sequence[Tensor], w_msa: Tensor, residual: Tensor) -> Tensor:
    """F_msa = concat(cabezas) W_msa + residual"""
    if not head_outputs:
        raise ValueError("multi_head_combine requiere al menos una cabeza")
    rows = {out.shape[0] for out in head_outputs}
    if len(rows) != 1:
        raise ShapeError(f"Las cabezas no comparten N: {sorted(rows)}")
    width = sum(out.shape[1] for out in head_outputs)
    if w_msa.shape[0] != width:
        raise ShapeError(f"concat de cabezas ({width} columnas) incompatible con W_msa {w_msa.shape}")
    return concat(list(head_outputs), axis=1) @ w_msa + residual


def ffn(f_msa: Tensor, block: TransformerBlockParams) -> Tensor:
    """F_ffn = ReLU(F_msa W_1 + b_1) W_2 + b_2 + F_msa"""
    hidden = (f_msa @ block.w_1 + block.b_1).relu()
    return (hidden @ block.w_2 + block.b_2) + f_msa
