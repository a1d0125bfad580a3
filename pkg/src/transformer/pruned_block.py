"""
Bloque transformer con poda adaptativa

Orden de operaciones en un forward con poda activa:
1. Compuerta sobre la entrada del bloque -> G_b, G_f
2. Selección de queries (G_b < tau_q)
3. Por cabeza: A_p sobre las queries conservadas, umbrales T, máscara M y
   re-normalización
4. Las filas conservadas vuelven a la secuencia completa (las podadas pasan
   por el residual), después FFN sobre todas las filas

Con la poda inactiva (calentamiento o flags apagados) el bloque ejecuta
exactamente attend + multi_head_combine + ffn.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.tensor import Tensor
from ..models.apformer_models import FlopMode, FlopReport, GateScores, PruneConfig, PruneDecision
from .attention import AttentionHeadParams, TransformerBlockParams, attend, ffn, multi_head_combine
from .flops import flop_report, pruned_attention_kernel
from .grpe import Grid
from .pruning import (
    adaptive_thresholds,
    apply_mask_renorm,
    gate_scores,
    make_decision,
    pruned_attention_logits,
    scatter_back,
    select_queries,
)


@dataclass
class BlockDiagnostics:
    """
    Estado de atención de un bloque para pérdidas, métricas y dumps

    Attributes:
        attention: por cabeza, A (N x N) o A_p antes de enmascarar (kept x N)
        renormed: por cabeza, A_p' re-normalizada (None sin poda por dependencia)
        decisions: por cabeza, la decisión de poda
        kept_indices: queries conservadas (compartidas por las cabezas)
        g_b, g_f: salidas de la compuerta (None si la poda por query está apagada)
    """
    attention: List[Tensor]
    renormed: List[Optional[Tensor]]
    decisions: List[PruneDecision]
    kept_indices: np.ndarray
    num_patches: int
    pruning_active: bool
    g_b: Optional[Tensor] = None
    g_f: Optional[Tensor] = None
    gates: Optional[GateScores] = field(default=None)

    def flop_report(self, d: int, d_m: int, mode: FlopMode = FlopMode.KEPT_FRACTION) -> FlopReport:
        return flop_report(self.num_patches, d, d_m, self.decisions, mode)


class PrunedTransformerBlock:
    """
    Un bloque del puente: MSA con GRPE + FFN, con poda en dos etapas

    Ejemplo de uso:
        block = PrunedTransformerBlock(params, grid=(8, 8), prune_config=PruneConfig())
        out, diag = block.forward(features, biases, pruning_active=True)
    """

    def __init__(self, params: TransformerBlockParams, grid: Grid, prune_config: PruneConfig):
        self.params = params
        self.grid = grid
        self.prune_config = prune_config

    @property
    def num_patches(self) -> int:
        return self.grid[0] * self.grid[1]

    def forward(
        self,
        features: Tensor,
        biases: Sequence[Optional[Tensor]],
        pruning_active: bool,
    ) -> Tuple[Tensor, BlockDiagnostics]:
        """
        Args:
            features: entrada del bloque N x d
            biases: sesgo P (N x N) por cabeza, o None sin GRPE
            pruning_active: False durante el calentamiento
        """
        cfg = self.prune_config
        params = self.params
        n = features.shape[0]
        query_on = pruning_active and cfg.enable_query_prune
        dep_on = pruning_active and cfg.enable_dep_prune

        g_b = g_f = None
        gates = None
        if cfg.enable_query_prune:
            g_b, g_f = gate_scores(features, params.gate)

        if not (query_on or dep_on):
            outputs, attentions = [], []
            for head, bias in zip(params.heads, biases):
                head_out, attention = attend(features, head, bias)
                outputs.append(head_out)
                attentions.append(attention)
            mixed = multi_head_combine(outputs, params.w_msa, features)
            kept = np.arange(n)
            decisions = []
            for head, bias in zip(params.heads, biases):
                mask = np.ones((n, n))
                multiplies = _count_multiplies(features, head, bias, kept, mask)
                decisions.append(make_decision(kept, mask, np.full(n, -np.inf), n, multiplies))
            if g_b is not None:
                gates = GateScores(g_b=g_b.data.copy(), g_f=g_f.data.copy(), kept=np.ones(n, dtype=bool))
            diagnostics = BlockDiagnostics(
                attention=attentions,
                renormed=[None] * len(attentions),
                decisions=decisions,
                kept_indices=kept,
                num_patches=n,
                pruning_active=False,
                g_b=g_b,
                g_f=g_f,
                gates=gates,
            )
            return ffn(mixed, params), diagnostics

        if query_on:
            pruned_features, kept = select_queries(features, g_b, cfg, warmup_active=False)
        else:
            pruned_features, kept = features, np.arange(n)

        outputs, attentions, renormed_list, decisions = [], [], [], []
        for head, bias in zip(params.heads, biases):
            bias_rows = bias[kept] if (bias is not None and query_on) else bias
            attention, queries = pruned_attention_logits(
                pruned_features, features, head, bias_rows, return_queries=True
            )
            if dep_on:
                thresholds = adaptive_thresholds(attention, queries, head.w_t, params.g)
                renormed, mask = apply_mask_renorm(
                    attention, thresholds, cfg.mask_grad, cfg.mask_temperature
                )
                used = renormed
                threshold_values = thresholds.data.copy()
            else:
                renormed = None
                mask = np.ones(attention.shape)
                used = attention
                threshold_values = np.full(len(kept), -np.inf)

            outputs.append(used @ (features @ head.e_v))
            attentions.append(attention)
            renormed_list.append(renormed)
            multiplies = _count_multiplies(features, head, bias, kept, mask)
            decisions.append(make_decision(kept, mask, threshold_values, n, multiplies))

        if query_on:
            mixed = scatter_back(outputs, kept, features, params.w_msa)
        else:
            mixed = multi_head_combine(outputs, params.w_msa, features)

        if g_b is not None:
            kept_flags = np.zeros(n, dtype=bool)
            kept_flags[kept] = True
            gates = GateScores(g_b=g_b.data.copy(), g_f=g_f.data.copy(), kept=kept_flags)

        diagnostics = BlockDiagnostics(
            attention=attentions,
            renormed=renormed_list,
            decisions=decisions,
            kept_indices=np.asarray(kept, dtype=np.int64),
            num_patches=n,
            pruning_active=True,
            g_b=g_b,
            g_f=g_f,
            gates=gates,
        )
        return ffn(mixed, params), diagnostics


def _count_multiplies(
    features: Tensor, head: AttentionHeadParams, bias: Optional[Tensor], kept: np.ndarray, mask: np.ndarray
) -> int:
    """Ejecutar el kernel instrumentado de la cabeza con la misma decisión"""
    _, _, count = pruned_attention_kernel(
        features.data,
        head.e_q.data,
        head.e_k.data,
        head.e_v.data,
        kept,
        mask,
        None if bias is None else bias.data,
    )
    return count
