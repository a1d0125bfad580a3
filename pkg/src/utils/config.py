"""
Utilidades de configuración y logging para el proyecto APFormer Toy

Este módulo maneja toda la configuración del sistema, incluyendo:
- Carga de archivos de configuración YAML o planos (`clave = valor`)
- Configuración del sistema de logging con loguru
- Valores por defecto del modelo, la poda, SSA y el entrenamiento

Formato plano (checkpoints y --config):

    # comentario
    model.image_size = [64, 64]
    prune.tau_q = 0.5
    ssa.entropy_reduction = min

Cada valor se interpreta con yaml.safe_load, así que enteros, flotantes,
booleanos y listas conservan su tipo natural.

Autor: Sistema APFormer Toy
Fecha: 2026-10-17
"""

import copy
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from loguru import logger


DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "config" / "config.yaml"


class Config:
    """
    Clase principal para manejo de configuración del proyecto

    Esta clase se encarga de:
    1. Cargar configuraciones desde archivos YAML o planos `clave = valor`
    2. Mezclar el archivo sobre los valores por defecto
    3. Proporcionar acceso a configuraciones anidadas con notación de puntos
    4. Serializar la configuración al formato plano de los checkpoints

    Ejemplo de uso:
        config = Config("config/toy.cfg")
        tau_q = config.get('prune.tau_q')
        config.set('seed', 7)
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None, strict: bool = False):
        """
        Inicializar la configuración

        Args:
            config_path: Ruta al archivo de configuración. Si no se proporciona,
                         usa config/config.yaml
            strict: Si es True, un archivo inexistente es un error
                    (FileNotFoundError) en lugar de caer a los valores por defecto
        """
        if config_path is None:
            config_path = DEFAULT_CONFIG_PATH

        self.config_path = Path(config_path)
        self.strict = strict
        self.config = _deep_merge(self._default_config(), self._load_config())

    def _load_config(self) -> Dict[str, Any]:
        """
        Cargar configuración desde archivo

        Returns:
            dict: Configuración anidada leída del archivo (vacía si no existe
                  y no estamos en modo estricto)
        """
        try:
            text = self.config_path.read_text(encoding="utf-8")
        except FileNotFoundError:
            if self.strict:
                raise FileNotFoundError(
                    f"Archivo de configuración no encontrado: {self.config_path}"
                )
            logger.warning(f"Archivo de configuración no encontrado: {self.config_path}")
            logger.info("Usando configuración por defecto.")
            return {}

        if self.config_path.suffix in (".yaml", ".yml"):
            return yaml.safe_load(text) or {}
        return parse_flat_config(text)

    @staticmethod
    def _default_config() -> Dict[str, Any]:
        """
        Configuración por defecto del sistema

        Corresponde al modelo de juguete: imagen 64x64, tres etapas de encoder
        (16/32/64 canales), puente de 2 bloques con 4 cabezas, grid 8x8.
        """
        return {
            "seed": 0,
            "model": {
                "in_channels": 1,
                "image_size": [64, 64],
                "encoder_widths": [16, 32, 64],
                "patch_size": 1,
                "embed_dim": 64,
                "heads": 4,
                "d_m": 16,
                "d_ff": 128,
                "blocks": 2,
                "classes": 2,
                "use_grpe": True,
                "use_abs_pos": False,
                "upsample": "bilinear",
            },
            "ssa": {
                "enabled": True,
                "alpha_sym": 0.3,
                "alpha_en": 0.5,
                "beta_1": 0.8,
                "beta_2": 0.2,
                "entropy_reduction": "min",
            },
            "prune": {
                "tau_q": 0.5,
                "g_init": -2.0,
                "g_frozen_rounds": 100,
                "enable_query_prune": True,
                "enable_dep_prune": True,
                "flop_mode": "kept-fraction",
                "mask_grad": "hard",
                "mask_temperature": 0.05,
            },
            "train": {
                "lr": 1e-4,
                "batch_size": 4,
                "rounds": 400,
                "augment": True,
                "seg_ce_weight": 0.5,
                "seg_dice_weight": 0.5,
                "log_every": 10,
                "completed_rounds": 0,
            },
            "data": {
                "dir": "data/synthetic",
                "count": 500,
                "image_size": [64, 64],
                "family": "ellipses",
                "noise": 0.1,
            },
            "logging": {
                "level": "INFO",
                "file": None,
                "max_size_mb": 50,
                "backup_count": 5,
            },
        }

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Obtener valor de configuración usando notación de puntos

        Ejemplo:
            tau_q = config.get('prune.tau_q')
            lr = config.get('train.lr', 1e-4)
        """
        value: Any = self.config
        for key in key_path.split("."):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, key_path: str, value: Any) -> None:
        """Asignar un valor creando los niveles intermedios que falten"""
        keys = key_path.split(".")
        node = self.config
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Copia de una sección completa (p. ej. 'prune')"""
        return copy.deepcopy(self.config.get(name, {}))

    def to_flat_text(self) -> str:
        """Serializar al formato plano `clave = valor`, claves ordenadas"""
        lines = ["# configuración APFormer Toy"]
        for key, value in sorted(_flatten(self.config).items()):
            lines.append(f"{key} = {_format_flat_value(value)}")
        return "\n".join(lines) + "\n"


def parse_flat_config(text: str) -> Dict[str, Any]:
    """
    Parsear el formato plano `clave.con.puntos = valor`

    Raises:
        ValueError: Si una línea no vacía no tiene el separador '='
    """
    result: Dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Línea {line_number} sin '=': {raw_line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"Línea {line_number} sin clave: {raw_line!r}")
        value = yaml.safe_load(raw_value) if raw_value else None

        node = result
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return result


def setup_logging(config: Config) -> None:
    """
    Configurar sistema de logging

    Configura dos handlers:
    1. Console: logs colorizados en stderr
    2. File: logs persistentes con rotación (solo si logging.file está definido)
    """
    log_config = config.get("logging", {}) or {}
    level = log_config.get("level", "INFO")

    logger.remove()
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
    )

    log_file = log_config.get("file")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_file,
            level=level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            rotation=f"{log_config.get('max_size_mb', 50)} MB",
            retention=log_config.get("backup_count", 5),
        )


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _flatten(tree: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in tree.items():
        full_key = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{full_key}."))
        else:
            flat[full_key] = value
    return flat


def _format_flat_value(value: Any) -> str:
    # flow style para que listas queden en una sola línea
    text = yaml.safe_dump(value, default_flow_style=True).strip()
    if text.endswith("..."):
        text = text[:-3].strip()
    return text
