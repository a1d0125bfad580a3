"""
APFormer Toy - Punto de entrada unificado

DESCRIPCIÓN GENERAL:
Interfaz de línea de comandos sobre la librería: generación del dataset
sintético, entrenamiento, evaluación, volcado de matrices de atención,
reporte de FLOPs y estudio de componentes.

SUBCOMANDOS:

1. gen-data   Genera el dataset sintético (PTN1 + index.txt)
2. train      Entrena el modelo; genera el dataset si no existe
3. eval       Evalúa un checkpoint e imprime la fila CSV de métricas
4. dump-attn  Escribe las matrices de atención antes/después de la poda (PGM)
5. flops      Imprime la fila CSV de FLOPs para (N, d, d_m, alpha, lambda)
6. ablate     Entrena las variantes del estudio de componentes

PARÁMETROS GLOBALES (antes o después del subcomando):
- --config: archivo YAML o plano `clave = valor` (debe existir)
- --seed: semilla global
- --out: directorio de salida

CÓDIGOS DE SALIDA:
- 0: éxito
- 1: error en tiempo de ejecución (se registra con traceback)
- 2: error de uso (argparse imprime el uso en stderr)

EJEMPLOS DE USO:
    python -m src.main gen-data --out data/synthetic
    python -m src.main train --config config/toy.cfg --out runs/toy
    python -m src.main eval --checkpoint runs/toy/checkpoint
    python -m src.main flops --n 256 --d 128 --dm 64

Autor: Sistema APFormer Toy
Fecha: 2026-10-17
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .analysis.ablation import VARIANTS, run_ablation
from .analysis.attention_dump import dump_attention
from .analysis.metrics import evaluate
from .data.dataset_io import INDEX_FILE, load_dataset
from .data.synthetic import gen_data
from .models.apformer_models import FlopMode, FlopReport, MetricSet, SyntheticSpec
from .segmentation.checkpoint import load_checkpoint, pruning_active_for
from .segmentation.trainer import Trainer
from .transformer.flops import report_from_rates
from .utils.config import Config, logger, setup_logging


def seed_value(text: str) -> int:
    """Semilla U64: entero en [0, 2^64)"""
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"semilla inválida: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"la semilla debe estar en [0, 2^64): {value}")
    return value


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS: un flag dado antes del subcomando no se pisa con None
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=str, default=argparse.SUPPRESS,
                        help="Archivo de configuración (YAML o `clave = valor`)")
    parent.add_argument("--seed", type=seed_value, default=argparse.SUPPRESS, help="Semilla global")
    parent.add_argument("--out", type=str, default=argparse.SUPPRESS, help="Directorio de salida")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="apformer-toy",
        description="""
APFormer Toy - transformer podado para segmentación a escala de escritorio
=========================================================================

SUBCOMANDOS:
- gen-data: dataset sintético
- train: entrenamiento
- eval: métricas de un checkpoint
- dump-attn: matrices de atención en PGM
- flops: FLOPs de auto-atención
- ablate: estudio de componentes
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", parents=[common], help="Generar el dataset sintético")
    gen.add_argument("--count", type=int, help="Número de imágenes (por defecto data.count)")

    train = commands.add_parser("train", parents=[common], help="Entrenar el modelo")
    train.add_argument("--data", type=str, help="Directorio del dataset (por defecto data.dir)")
    train.add_argument("--rounds", type=int, help="Rondas de entrenamiento (por defecto train.rounds)")

    ev = commands.add_parser("eval", parents=[common], help="Evaluar un checkpoint")
    ev.add_argument("--checkpoint", type=str, required=True)
    ev.add_argument("--data", type=str, help="Directorio del dataset (por defecto data.dir)")
    ev.add_argument("--split", choices=["train", "val", "test"], default="test")

    dump = commands.add_parser("dump-attn", parents=[common], help="Volcar matrices de atención")
    dump.add_argument("--checkpoint", type=str, required=True)
    dump.add_argument("--data", type=str, help="Directorio del dataset (por defecto data.dir)")
    dump.add_argument("--split", choices=["train", "val", "test"], default="test")
    dump.add_argument("--index", type=int, default=0, help="Índice de la muestra dentro del split")

    flops = commands.add_parser("flops", parents=[common], help="Reporte de FLOPs de auto-atención")
    flops.add_argument("--n", type=int, required=True, help="Número de parches N")
    flops.add_argument("--d", type=int, required=True, help="Dimensión de embedding d")
    flops.add_argument("--dm", type=int, required=True, help="Dimensión por cabeza d_m")
    flops.add_argument("--alpha", type=float, default=0.0, help="Tasa de poda de queries")
    flops.add_argument("--lambda", dest="lam", type=float, default=0.0, help="Tasa de poda de dependencias")
    flops.add_argument("--mode", choices=[mode.value for mode in FlopMode], default=FlopMode.KEPT_FRACTION.value)

    ablate = commands.add_parser("ablate", parents=[common], help="Estudio de componentes")
    ablate.add_argument("--data", type=str, help="Directorio del dataset (por defecto data.dir)")
    ablate.add_argument("--variants", nargs="+", choices=list(VARIANTS), help="Subconjunto de variantes")
    return parser


def _data_dir(args: argparse.Namespace, config: Config) -> Path:
    return Path(args.data or config.get("data.dir"))


def _ensure_dataset(data_dir: Path, config: Config):
    if (data_dir / INDEX_FILE).exists():
        return load_dataset(data_dir)
    logger.warning(f"No hay dataset en {data_dir}; generándolo")
    return gen_data(SyntheticSpec.from_config(config), data_dir)[1]


def run_gen_data(args: argparse.Namespace, config: Config) -> int:
    if args.count is not None:
        config.set("data.count", args.count)
    out_dir = getattr(args, "out", None) or config.get("data.dir")
    gen_data(SyntheticSpec.from_config(config), out_dir)
    return 0


def run_train(args: argparse.Namespace, config: Config) -> int:
    if args.rounds is not None:
        config.set("train.rounds", args.rounds)
    dataset = _ensure_dataset(_data_dir(args, config), config)
    out_dir = getattr(args, "out", None) or "runs/train"
    result = Trainer(config, dataset, out_dir).train()
    print(f"checkpoint: {result.checkpoint_dir}")
    return 0


def run_eval(args: argparse.Namespace, config: Config) -> int:
    model, checkpoint_config = load_checkpoint(args.checkpoint)
    dataset = load_dataset(_data_dir(args, config)).subset(args.split)
    scores = evaluate(model, dataset, pruning_active=pruning_active_for(checkpoint_config))
    text = f"{MetricSet.CSV_HEADER}\n{scores.to_csv_row()}\n"
    out = getattr(args, "out", None)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "metrics.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def run_dump_attn(args: argparse.Namespace, config: Config) -> int:
    dataset = load_dataset(_data_dir(args, config)).subset(args.split)
    if not 0 <= args.index < len(dataset):
        raise IndexError(f"Índice {args.index} fuera del split {args.split} ({len(dataset)} muestras)")
    out_dir = getattr(args, "out", None) or "runs/attn"
    written = dump_attention(args.checkpoint, dataset.images[args.index], out_dir)
    print(f"{len(written)} archivos en {out_dir}")
    return 0


def run_flops(args: argparse.Namespace, config: Config) -> int:
    report = report_from_rates(args.n, args.d, args.dm, args.alpha, args.lam, FlopMode(args.mode))
    sys.stdout.write(f"{FlopReport.CSV_HEADER}\n{report.to_csv_row()}\n")
    return 0


def run_ablate(args: argparse.Namespace, config: Config) -> int:
    dataset = _ensure_dataset(_data_dir(args, config), config)
    out_dir = getattr(args, "out", None) or "runs/ablation"
    table = run_ablation(config, dataset, out_dir, variants=args.variants)
    print(table.to_string(index=False))
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, Config], int]] = {
    "gen-data": run_gen_data,
    "train": run_train,
    "eval": run_eval,
    "dump-attn": run_dump_attn,
    "flops": run_flops,
    "ablate": run_ablate,
}


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Ejecutar la CLI

    Returns:
        int: Código de salida (0=éxito, 1=error, 2=uso incorrecto)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        # --help sale con 0, errores de uso con 2
        return 0 if exit_request.code in (None, 0) else 2

    try:
        config_path = getattr(args, "config", None)
        config = Config(config_path, strict=True) if config_path else Config()
        seed = getattr(args, "seed", None)
        if seed is not None:
            config.set("seed", seed)
        setup_logging(config)

        logger.info(f"=== APFormer Toy: {args.command} ===")
        return COMMANDS[args.command](args, config)
    except Exception as error:
        logger.exception(f"Error en {args.command}: {error}")
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
