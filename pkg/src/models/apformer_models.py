"""
Modelos de datos para el sistema APFormer Toy

Contiene los Enums de configuración, las configuraciones tipadas
(construidas desde Config con from_config) y los registros de resultados
que circulan entre el modelo, el entrenamiento y el harness.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np


class ShapeFamily(Enum):
    """Familias de formas del dataset sintético"""
    ELLIPSES = "ellipses"
    BLOBS = "blobs"
    RINGS = "rings"


class FlopMode(Enum):
    """Lectura de la fórmula de FLOPs podados"""
    AS_PRINTED = "as-printed"
    KEPT_FRACTION = "kept-fraction"


class EntropyReduction(Enum):
    """Reducción de las entropías por fila en la pérdida de entropía"""
    MIN = "min"
    MEAN = "mean"


class UpsampleMode(Enum):
    """Interpolación del decoder"""
    BILINEAR = "bilinear"
    NEAREST = "nearest"


class MaskGrad(Enum):
    """Gradiente a través de la máscara de dependencias"""
    HARD = "hard"
    SIGMOID = "sigmoid"


@dataclass
class SsaConfig:
    """Pesos y factores de suavizado de las pérdidas de auto-atención"""
    alpha_sym: float = 0.3
    alpha_en: float = 0.5
    beta_1: float = 0.8
    beta_2: float = 0.2
    enabled: bool = True
    entropy_reduction: EntropyReduction = EntropyReduction.MIN

    def __post_init__(self):
        self.entropy_reduction = EntropyReduction(self.entropy_reduction)
        for name in ("alpha_sym", "alpha_en"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} debe estar en [0, 1), recibido {value}")
        if self.beta_1 < 0 or self.beta_2 < 0:
            raise ValueError(f"beta_1/beta_2 deben ser >= 0, recibido {self.beta_1}, {self.beta_2}")
        if self.beta_1 + self.beta_2 <= 0:
            raise ValueError("beta_1 + beta_2 debe ser > 0")

    @classmethod
    def from_config(cls, config) -> "SsaConfig":
        section = config.section("ssa")
        return cls(
            alpha_sym=float(section["alpha_sym"]),
            alpha_en=float(section["alpha_en"]),
            beta_1=float(section["beta_1"]),
            beta_2=float(section["beta_2"]),
            enabled=bool(section["enabled"]),
            entropy_reduction=EntropyReduction(section["entropy_reduction"]),
        )


@dataclass
class PruneConfig:
    """Parámetros de la poda en dos etapas"""
    tau_q: float = 0.5
    g_init: float = -2.0
    g_frozen_rounds: int = 100
    enable_query_prune: bool = True
    enable_dep_prune: bool = True
    flop_mode: FlopMode = FlopMode.KEPT_FRACTION
    mask_grad: MaskGrad = MaskGrad.HARD
    mask_temperature: float = 0.05

    def __post_init__(self):
        self.flop_mode = FlopMode(self.flop_mode)
        self.mask_grad = MaskGrad(self.mask_grad)
        if not 0.0 < self.tau_q <= 1.0:
            raise ValueError(f"tau_q debe estar en (0, 1], recibido {self.tau_q}")
        if self.g_frozen_rounds < 0:
            raise ValueError(f"g_frozen_rounds debe ser >= 0, recibido {self.g_frozen_rounds}")
        if self.mask_temperature <= 0:
            raise ValueError(f"mask_temperature debe ser > 0, recibido {self.mask_temperature}")

    @property
    def any_enabled(self) -> bool:
        return self.enable_query_prune or self.enable_dep_prune

    @classmethod
    def from_config(cls, config) -> "PruneConfig":
        section = config.section("prune")
        return cls(
            tau_q=float(section["tau_q"]),
            g_init=float(section["g_init"]),
            g_frozen_rounds=int(section["g_frozen_rounds"]),
            enable_query_prune=bool(section["enable_query_prune"]),
            enable_dep_prune=bool(section["enable_dep_prune"]),
            flop_mode=FlopMode(section["flop_mode"]),
            mask_grad=MaskGrad(section["mask_grad"]),
            mask_temperature=float(section["mask_temperature"]),
        )


@dataclass
class ModelConfig:
    """
    Configuración del híbrido CNN-transformer en forma de U

    El encoder reduce la resolución a la mitad en cada etapa; el puente
    trabaja sobre el mapa de la última etapa con parches s x s.
    """
    in_channels: int = 1
    image_size: Tuple[int, int] = (64, 64)
    encoder_widths: Tuple[int, ...] = (16, 32, 64)
    patch_size: int = 1
    embed_dim: int = 64
    heads: int = 4
    d_m: int = 16
    d_ff: int = 128
    blocks: int = 2
    classes: int = 2
    use_grpe: bool = True
    use_abs_pos: bool = False
    upsample: UpsampleMode = UpsampleMode.BILINEAR
    ssa: SsaConfig = field(default_factory=SsaConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.encoder_widths = tuple(int(v) for v in self.encoder_widths)
        self.upsample = UpsampleMode(self.upsample)

        if len(self.image_size) != 2:
            raise ValueError(f"image_size debe tener 2 valores, recibido {self.image_size}")
        if not self.encoder_widths:
            raise ValueError("encoder_widths no puede estar vacío")
        if self.heads < 1:
            raise ValueError(f"heads debe ser >= 1, recibido {self.heads}")
        if self.embed_dim != self.heads * self.d_m:
            raise ValueError(
                f"embed_dim ({self.embed_dim}) debe ser heads*d_m ({self.heads}*{self.d_m})"
            )
        if self.d_ff < self.embed_dim:
            raise ValueError(f"d_ff ({self.d_ff}) debe ser >= embed_dim ({self.embed_dim})")
        if self.classes < 2:
            raise ValueError(f"classes debe ser >= 2, recibido {self.classes}")

        factor = self.downsampling * self.patch_size
        height, width = self.image_size
        if height % factor or width % factor:
            raise ValueError(
                f"image_size {self.image_size} no es divisible por downsampling*s = {factor}"
            )
        if self.num_patches < 2:
            raise ValueError(f"El grid {self.grid} tiene menos de 2 parches")

    @property
    def downsampling(self) -> int:
        return 2 ** len(self.encoder_widths)

    @property
    def bridge_size(self) -> Tuple[int, int]:
        """Resolución del mapa de características que entra al puente"""
        return (self.image_size[0] // self.downsampling, self.image_size[1] // self.downsampling)

    @property
    def grid(self) -> Tuple[int, int]:
        height, width = self.bridge_size
        return (height // self.patch_size, width // self.patch_size)

    @property
    def num_patches(self) -> int:
        return self.grid[0] * self.grid[1]

    @classmethod
    def from_config(cls, config) -> "ModelConfig":
        section = config.section("model")
        return cls(
            in_channels=int(section["in_channels"]),
            image_size=tuple(section["image_size"]),
            encoder_widths=tuple(section["encoder_widths"]),
            patch_size=int(section["patch_size"]),
            embed_dim=int(section["embed_dim"]),
            heads=int(section["heads"]),
            d_m=int(section["d_m"]),
            d_ff=int(section["d_ff"]),
            blocks=int(section["blocks"]),
            classes=int(section["classes"]),
            use_grpe=bool(section["use_grpe"]),
            use_abs_pos=bool(section["use_abs_pos"]),
            upsample=UpsampleMode(section["upsample"]),
            ssa=SsaConfig.from_config(config),
            prune=PruneConfig.from_config(config),
        )


@dataclass
class TrainConfig:
    """Hiperparámetros del entrenamiento (Adam, lr 1e-4, batch 4, 400 rondas)"""
    lr: float = 1e-4
    batch_size: int = 4
    rounds: int = 400
    augment: bool = True
    seg_ce_weight: float = 0.5
    seg_dice_weight: float = 0.5
    log_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr debe ser > 0, recibido {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size debe ser >= 1, recibido {self.batch_size}")
        if self.rounds < 0:
            raise ValueError(f"rounds debe ser >= 0, recibido {self.rounds}")

    @classmethod
    def from_config(cls, config) -> "TrainConfig":
        section = config.section("train")
        return cls(
            lr=float(section["lr"]),
            batch_size=int(section["batch_size"]),
            rounds=int(section["rounds"]),
            augment=bool(section["augment"]),
            seg_ce_weight=float(section["seg_ce_weight"]),
            seg_dice_weight=float(section["seg_dice_weight"]),
            log_every=max(1, int(section["log_every"])),
            seed=int(config.get("seed", 0)),
        )


@dataclass
class SyntheticSpec:
    """Especificación del dataset sintético"""
    count: int = 500
    image_size: Tuple[int, int] = (64, 64)
    family: ShapeFamily = ShapeFamily.ELLIPSES
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.family = ShapeFamily(self.family)
        if self.count < 1:
            raise ValueError(f"count debe ser >= 1, recibido {self.count}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise debe estar en [0, 1], recibido {self.noise}")
        if min(self.image_size) < 8:
            raise ValueError(f"image_size demasiado pequeño: {self.image_size}")

    @classmethod
    def from_config(cls, config) -> "SyntheticSpec":
        section = config.section("data")
        return cls(
            count=int(section["count"]),
            image_size=tuple(section["image_size"]),
            family=ShapeFamily(section["family"]),
            noise=float(section["noise"]),
            seed=int(config.get("seed", 0)),
        )


@dataclass
class SegSample:
    """Imagen C x H x W en [0, 1] con su máscara H x W de etiquetas enteras"""
    image: np.ndarray
    mask: np.ndarray
    name: str = ""

    def validate(self, classes: int) -> None:
        if self.image.ndim != 3:
            raise ValueError(f"image debe ser C x H x W, shape {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise ValueError(f"mask {self.mask.shape} no coincide con image {self.image.shape}")
        if self.mask.min() < 0 or self.mask.max() >= classes:
            raise ValueError(f"Etiquetas fuera de [0, {classes}) en {self.name or 'muestra'}")


@dataclass
class MetricSet:
    """Métricas de segmentación binaria"""
    dice: float
    iou: float
    acc: float
    se: float
    sp: float

    CSV_HEADER = "dice,iou,acc,se,sp"

    def to_csv_row(self) -> str:
        return ",".join(f"{value:.6f}" for value in self.as_tuple())

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.dice, self.iou, self.acc, self.se, self.sp)


@dataclass
class LossBreakdown:
    """Componentes de la pérdida total (pesos unitarios)"""
    l_seg: float
    l_ssa_total: float
    l_g_total: float
    total: float


@dataclass
class GateScores:
    """Probabilidades fondo/primer plano por parche y decisión de conservación"""
    g_b: np.ndarray
    g_f: np.ndarray
    kept: np.ndarray

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kept)


@dataclass
class PruneDecision:
    """
    Resultado de la poda de una cabeza

    Attributes:
        kept_indices: índices de queries conservadas, ordenados
        mask: matriz binaria kept x N (1 = dependencia conservada)
        thresholds: umbral T por query conservada
        measured_alpha: fracción de queries podadas
        measured_lambda: fracción de ceros en mask
        multiplies: multiplicaciones contadas por el kernel instrumentado
    """
    kept_indices: np.ndarray
    mask: np.ndarray
    thresholds: np.ndarray
    measured_alpha: float
    measured_lambda: float
    multiplies: Optional[int] = None

    @property
    def kept(self) -> int:
        return int(len(self.kept_indices))


@dataclass
class FlopReport:
    """Conteo de multiplicaciones de la auto-atención con y sin poda"""
    n: int
    d: int
    d_m: int
    alpha: float
    lambda_: float
    omega_sa: int
    omega_psa_formula: int
    omega_psa_measured: int

    CSV_HEADER = "N,d,d_m,alpha,lambda,omega_sa,omega_psa_formula,omega_psa_measured"

    def to_csv_row(self) -> str:
        return (
            f"{self.n},{self.d},{self.d_m},{self.alpha:.6f},{self.lambda_:.6f},"
            f"{self.omega_sa},{self.omega_psa_formula},{self.omega_psa_measured}"
        )


@dataclass
class ParameterCheck:
    """Resultado de la verificación de gradiente de un parámetro"""
    name: str
    max_abs_err: float
    max_rel_err: float
    checked: int
    failed_index: Optional[int] = None


@dataclass
class GradCheckReport:
    """Comparación gradiente analítico vs diferencias finitas centrales"""
    max_abs_err: float
    max_rel_err: float
    per_parameter: List[ParameterCheck] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def passed(self, tolerance: float) -> bool:
        return self.ok and self.max_rel_err <= tolerance
