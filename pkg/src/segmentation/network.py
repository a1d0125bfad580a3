"""
Híbrido CNN-transformer en forma de U (modelo de juguete)

ESTRUCTURA:
1. Encoder: por etapa conv3x3-ReLU-conv3x3-ReLU (skip) + max-pool 2x2
2. Puente: patch_embed -> B bloques transformer con poda -> un-patch,
   con residual externo (salida = mapa + un-patch(...))
3. Decoder: por etapa upsample x2, concat con el skip, conv-ReLU-conv-ReLU
4. Cabeza 1x1 -> logits por píxel (clases x H x W)

Los parámetros viven en un diccionario plano nombre -> Tensor, que es lo que
el optimizador y los checkpoints recorren.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..core.functional import conv2d, max_pool2d, upsample2d
from ..core.tensor import ShapeError, Tensor, concat, no_grad, parameter, stack
from ..models.apformer_models import FlopReport, ModelConfig
from ..transformer.attention import PatchSequence, TransformerBlockParams
from ..transformer.flops import flop_report
from ..transformer.grpe import Grid, grpe_embed
from ..transformer.pruned_block import BlockDiagnostics, PrunedTransformerBlock
from ..utils.config import logger


@dataclass
class ModelDiagnostics:
    """Diagnóstico de un forward: blocks[muestra][bloque]"""
    blocks: List[List[BlockDiagnostics]] = field(default_factory=list)
    pruning_active: bool = False

    def sample_report(self, sample: int, d: int, d_m: int, mode) -> FlopReport:
        decisions = [dec for block in self.blocks[sample] for dec in block.decisions]
        return flop_report(self.blocks[sample][0].num_patches, d, d_m, decisions, mode)

    def mean_report(self, d: int, d_m: int, mode) -> FlopReport:
        """Promedio sobre las muestras del lote (enteros redondeados)"""
        reports = [self.sample_report(i, d, d_m, mode) for i in range(len(self.blocks))]
        first = reports[0]
        return FlopReport(
            n=first.n,
            d=d,
            d_m=d_m,
            alpha=float(np.mean([r.alpha for r in reports])),
            lambda_=float(np.mean([r.lambda_ for r in reports])),
            omega_sa=first.omega_sa,
            omega_psa_formula=int(round(np.mean([r.omega_psa_formula for r in reports]))),
            omega_psa_measured=int(round(np.mean([r.omega_psa_measured for r in reports]))),
        )


def patch_embed(feature_map: Tensor, patch_size: int, weight: Tensor, bias: Optional[Tensor] = None) -> PatchSequence:
    """
    Tokenizar un mapa D x h' x w' en parches s x s proyectados a d

    weight: (D s^2) x d. La fila k de la secuencia es el parche (k div gw, k mod gw).
    """
    if feature_map.ndim != 3:
        raise ShapeError(f"patch_embed espera D x h x w, shape {feature_map.shape}")
    channels, height, width = feature_map.shape
    s = patch_size
    if height % s or width % s:
        raise ValueError(f"El mapa {height}x{width} no es divisible por s = {s}")
    grid = (height // s, width // s)
    if weight.shape[0] != channels * s * s:
        raise ShapeError(f"Proyección {weight.shape} incompatible con parches de {channels * s * s} valores")

    tokens = (
        feature_map.reshape(channels, grid[0], s, grid[1], s)
        .transpose(1, 3, 0, 2, 4)
        .reshape(grid[0] * grid[1], channels * s * s)
    )
    projected = tokens @ weight
    if bias is not None:
        projected = projected + bias
    return PatchSequence(features=projected, grid=grid)


def unpatch(tokens: Tensor, grid: Grid, channels: int, patch_size: int) -> Tensor:
    """Inversa de la tokenización: N x (D s^2) -> D x h' x w'"""
    s = patch_size
    return (
        tokens.reshape(grid[0], grid[1], channels, s, s)
        .transpose(2, 0, 3, 1, 4)
        .reshape(channels, grid[0] * s, grid[1] * s)
    )


def ground_truth_patch_mask(mask: np.ndarray, grid: Grid, patch_size: int, downsampling: int) -> np.ndarray:
    """Un parche es primer plano si algún píxel de su celda lo es"""
    mask = np.asarray(mask)
    cell = patch_size * downsampling
    expected = (grid[0] * cell, grid[1] * cell)
    if mask.shape != expected:
        raise ValueError(f"Máscara {mask.shape} inconsistente con grid {grid} y celda {cell} (esperado {expected})")
    cells = (mask > 0).reshape(grid[0], cell, grid[1], cell)
    return cells.any(axis=(1, 3)).reshape(-1).astype(np.int64)


class SegModel:
    """
    Modelo de segmentación completo con puente transformer podado

    Ejemplo de uso:
        model = SegModel(ModelConfig(), seed=0)
        logits, diagnostics = model.forward(images, pruning_active=False)
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params: Dict[str, Tensor] = {}
        self._build(rng)
        logger.debug(f"SegModel creado: {self.parameter_count()} parámetros, grid {config.grid}")

    # ------------------------------------------------------------------
    # Construcción
    # ------------------------------------------------------------------

    def _add(self, name: str, values: np.ndarray) -> Tensor:
        tensor = parameter(values, name=name)
        self.params[name] = tensor
        return tensor

    def _add_conv(self, name: str, c_in: int, c_out: int, kernel: int, rng: np.random.Generator) -> None:
        fan_in = c_in * kernel * kernel
        self._add(f"{name}.w", rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, kernel, kernel)))
        self._add(f"{name}.b", np.zeros(c_out))

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        widths = cfg.encoder_widths
        channels_in = cfg.in_channels
        for stage, width in enumerate(widths):
            self._add_conv(f"enc{stage}.conv1", channels_in, width, 3, rng)
            self._add_conv(f"enc{stage}.conv2", width, width, 3, rng)
            channels_in = width

        bridge_channels = widths[-1]
        token_dim = bridge_channels * cfg.patch_size**2
        d = cfg.embed_dim
        self._add("bridge.embed.w", rng.normal(0.0, np.sqrt(1.0 / token_dim), (token_dim, d)))
        self._add("bridge.embed.b", np.zeros(d))
        if cfg.use_abs_pos:
            self._add("bridge.pos", rng.normal(0.0, 0.02, (cfg.num_patches, d)))

        self.blocks: List[PrunedTransformerBlock] = []
        for index in range(cfg.blocks):
            prefix = f"bridge.block{index}"
            block_params = TransformerBlockParams.create(
                d, cfg.heads, cfg.d_m, cfg.d_ff, cfg.grid, rng,
                use_grpe=cfg.use_grpe, g_init=cfg.prune.g_init, prefix=prefix,
            )
            self.params.update(block_params.named_parameters(prefix))
            self.blocks.append(PrunedTransformerBlock(block_params, cfg.grid, cfg.prune))

        self._add("bridge.unembed.w", rng.normal(0.0, np.sqrt(1.0 / d), (d, token_dim)))
        self._add("bridge.unembed.b", np.zeros(token_dim))

        below = bridge_channels
        for stage in reversed(range(len(widths))):
            width = widths[stage]
            self._add_conv(f"dec{stage}.conv1", below + width, width, 3, rng)
            self._add_conv(f"dec{stage}.conv2", width, width, 3, rng)
            below = width
        self._add_conv("head", widths[0], cfg.classes, 1, rng)

    # ------------------------------------------------------------------
    # Consultas
    # ------------------------------------------------------------------

    def parameter_count(self) -> int:
        return int(sum(tensor.size for tensor in self.params.values()))

    def g_names(self) -> List[str]:
        return [f"bridge.block{i}.g" for i in range(len(self.blocks))]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"Faltan parámetros en el checkpoint: {sorted(missing)[:5]}")
        for name, tensor in self.params.items():
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ShapeError(f"{name}: checkpoint {values.shape} vs modelo {tensor.shape}")
            tensor.data[...] = values

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def _conv_block(self, x: Tensor, name: str) -> Tensor:
        p = self.params
        x = conv2d(x, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"]).relu()
        return conv2d(x, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"]).relu()

    def _position_biases(self) -> List[List[Optional[Tensor]]]:
        biases = []
        for block in self.blocks:
            biases.append(
                [grpe_embed(self.config.grid, head.grpe) if head.grpe is not None else None
                 for head in block.params.heads]
            )
        return biases

    def bridge(
        self,
        feature_map: Tensor,
        pruning_active: bool,
        biases: Optional[List[List[Optional[Tensor]]]] = None,
    ) -> Tuple[Tensor, List[BlockDiagnostics]]:
        """Puente transformer de una muestra: D x h' x w' -> D x h' x w'"""
        cfg = self.config
        p = self.params
        sequence = patch_embed(feature_map, cfg.patch_size, p["bridge.embed.w"], p["bridge.embed.b"])
        tokens = sequence.features
        if cfg.use_abs_pos:
            tokens = tokens + p["bridge.pos"]

        if biases is None:
            biases = self._position_biases()
        diagnostics = []
        for block, block_biases in zip(self.blocks, biases):
            tokens, block_diag = block.forward(tokens, block_biases, pruning_active)
            diagnostics.append(block_diag)

        restored = tokens @ p["bridge.unembed.w"] + p["bridge.unembed.b"]
        return feature_map + unpatch(restored, sequence.grid, feature_map.shape[0], cfg.patch_size), diagnostics

    def forward(
        self,
        images: Tensor,
        pruning_active: bool = False,
        zero_skips: Iterable[int] = (),
    ) -> Tuple[Tensor, ModelDiagnostics]:
        """
        Args:
            images: B x C x H x W
            pruning_active: poda habilitada (False durante el calentamiento)
            zero_skips: etapas cuyo skip se reemplaza por ceros (chequeo de conectividad)

        Returns:
            (logits B x clases x H x W, diagnóstico por muestra y bloque)
        """
        cfg = self.config
        images = images if isinstance(images, Tensor) else Tensor(images)
        expected = (cfg.in_channels,) + cfg.image_size
        if images.ndim != 4 or images.shape[1:] != expected:
            raise ShapeError(f"Imágenes {images.shape} no coinciden con (B,) + {expected}")
        zero_skips = set(zero_skips)

        skips: List[Tensor] = []
        x = images
        for stage in range(len(cfg.encoder_widths)):
            x = self._conv_block(x, f"enc{stage}")
            skips.append(x)
            x = max_pool2d(x)

        biases = self._position_biases()
        outputs: List[Tensor] = []
        diagnostics = ModelDiagnostics(pruning_active=pruning_active)
        for sample in range(x.shape[0]):
            bridged, sample_diag = self.bridge(x[sample], pruning_active, biases)
            outputs.append(bridged)
            diagnostics.blocks.append(sample_diag)
        x = stack(outputs, axis=0)

        mode = cfg.upsample.value
        for stage in reversed(range(len(cfg.encoder_widths))):
            skip = skips[stage]
            if stage in zero_skips:
                skip = Tensor(np.zeros(skip.shape))
            x = upsample2d(x, skip.shape[2:], mode)
            x = self._conv_block(concat([x, skip], axis=1), f"dec{stage}")

        logits = conv2d(x, self.params["head.w"], self.params["head.b"], padding=0)
        return logits, diagnostics

    def predict(self, images: np.ndarray, pruning_active: bool = False) -> np.ndarray:
        """Máscaras B x H x W por argmax de clase"""
        with no_grad():
            logits, _ = self.forward(Tensor(images), pruning_active)
        return logits.data.argmax(axis=1)

    def flop_report(self, diagnostics: ModelDiagnostics) -> FlopReport:
        cfg = self.config
        return diagnostics.mean_report(cfg.embed_dim, cfg.d_m, cfg.prune.flop_mode)

    def patch_masks(self, masks: np.ndarray) -> np.ndarray:
        """Etiquetas fondo/primer plano por parche para un lote de máscaras"""
        cfg = self.config
        return np.stack(
            [ground_truth_patch_mask(m, cfg.grid, cfg.patch_size, cfg.downsampling) for m in masks]
        )
