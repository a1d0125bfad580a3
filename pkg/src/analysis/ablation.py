"""
Estudio de componentes (ablación)

Entrena las variantes sobre el mismo dataset y la misma semilla y tabula
Dice/IoU de test, tasas de poda medidas y FLOPs de auto-atención:

    baseline   posición absoluta, sin SSA, sin GRPE, sin poda
    +ssa       baseline + pérdidas SSA
    +grpe      GRPE en lugar de la posición absoluta
    +pruning   baseline + poda en dos etapas
    full       SSA + GRPE + poda
"""

import copy
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ..core.tensor import Tensor, no_grad
from ..data.dataset_io import SegDataset
from ..segmentation.checkpoint import pruning_active_for
from ..segmentation.trainer import Trainer
from ..utils.config import Config, logger
from .metrics import evaluate


ABLATION_COLUMNS = ["variant", "dice", "iou", "alpha", "lambda", "omega_sa", "omega_psa_measured", "final_loss"]

VARIANTS: Dict[str, Dict[str, bool]] = {
    "baseline": {"ssa.enabled": False, "model.use_grpe": False, "model.use_abs_pos": True, "prune": False},
    "+ssa": {"ssa.enabled": True, "model.use_grpe": False, "model.use_abs_pos": True, "prune": False},
    "+grpe": {"ssa.enabled": False, "model.use_grpe": True, "model.use_abs_pos": False, "prune": False},
    "+pruning": {"ssa.enabled": False, "model.use_grpe": False, "model.use_abs_pos": True, "prune": True},
    "full": {"ssa.enabled": True, "model.use_grpe": True, "model.use_abs_pos": False, "prune": True},
}


def variant_config(base: Config, overrides: Dict[str, bool]) -> Config:
    config = copy.deepcopy(base)
    for key, value in overrides.items():
        if key == "prune":
            config.set("prune.enable_query_prune", value)
            config.set("prune.enable_dep_prune", value)
        else:
            config.set(key, value)
    return config


def run_ablation(
    base: Config,
    dataset: SegDataset,
    out_dir: Union[str, Path],
    variants: Optional[List[str]] = None,
) -> pd.DataFrame:
    out_dir = Path(out_dir)
    names = variants or list(VARIANTS)
    test_set = dataset.subset("test") if "test" in dataset.splits else dataset
    rows = []
    for name in names:
        if name not in VARIANTS:
            raise ValueError(f"Variante desconocida: {name}")
        logger.info(f"Ablación: entrenando la variante {name}")
        config = variant_config(base, VARIANTS[name])
        safe_name = name.replace("+", "plus_")
        result = Trainer(config, dataset, out_dir / safe_name).train()
        active = pruning_active_for(config)

        scores = evaluate(result.model, test_set, pruning_active=active)
        with no_grad():
            _, diagnostics = result.model.forward(Tensor(test_set.images[:4]), pruning_active=active)
        report = result.model.flop_report(diagnostics)
        last = result.history.iloc[-1] if len(result.history) else None
        final_loss = float(last["l_seg"] + last["l_ssa"] + last["l_g"]) if last is not None else np.nan
        rows.append(
            {
                "variant": name,
                "dice": scores.dice,
                "iou": scores.iou,
                "alpha": report.alpha,
                "lambda": report.lambda_,
                "omega_sa": report.omega_sa,
                "omega_psa_measured": report.omega_psa_measured,
                "final_loss": final_loss,
            }
        )

    table = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "ablation.csv", index=False, float_format="%.6f")
    logger.info(f"✅ Tabla de ablación guardada en {out_dir / 'ablation.csv'}")
    return table
