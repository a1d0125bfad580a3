"""
Checkpoints del modelo

Un checkpoint es un directorio con:
    config.cfg            configuración plana `clave = valor` (incluye
                          train.completed_rounds)
    params/<nombre>.ptn   un tensor PTN1 por parámetro
"""

from pathlib import Path
from typing import Tuple, Union

from ..models.apformer_models import ModelConfig
from ..utils.config import Config, logger
from ..utils.tensor_io import read_tensor, write_tensor
from .network import SegModel


CONFIG_FILE = "config.cfg"
PARAMS_DIR = "params"


def save_checkpoint(
    model: SegModel, config: Config, out_dir: Union[str, Path], completed_rounds: int
) -> Path:
    out_dir = Path(out_dir)
    params_dir = out_dir / PARAMS_DIR
    params_dir.mkdir(parents=True, exist_ok=True)
    for name, values in model.state_arrays().items():
        write_tensor(params_dir / f"{name}.ptn", values)

    config.set("train.completed_rounds", int(completed_rounds))
    (out_dir / CONFIG_FILE).write_text(config.to_flat_text(), encoding="utf-8")
    logger.info(f"Checkpoint guardado en {out_dir} ({len(model.params)} tensores)")
    return out_dir


def load_checkpoint(checkpoint_dir: Union[str, Path]) -> Tuple[SegModel, Config]:
    """
    Reconstruir el modelo desde un checkpoint

    Raises:
        FileNotFoundError: si falta config.cfg o algún tensor
    """
    checkpoint_dir = Path(checkpoint_dir)
    config = Config(checkpoint_dir / CONFIG_FILE, strict=True)
    model = SegModel(ModelConfig.from_config(config), seed=int(config.get("seed", 0)))
    arrays = {name: read_tensor(checkpoint_dir / PARAMS_DIR / f"{name}.ptn") for name in model.params}
    model.load_arrays(arrays)
    logger.info(f"Checkpoint cargado de {checkpoint_dir}")
    return model, config


def pruning_active_for(config: Config) -> bool:
    """La poda está activa en evaluación si el entrenamiento pasó el calentamiento"""
    completed = int(config.get("train.completed_rounds", 0))
    frozen = int(config.get("prune.g_frozen_rounds", 0))
    any_enabled = bool(config.get("prune.enable_query_prune")) or bool(config.get("prune.enable_dep_prune"))
    return any_enabled and completed > frozen
