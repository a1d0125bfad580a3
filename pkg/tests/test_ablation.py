"""Estudio de componentes"""

import pandas as pd
import pytest

from src.analysis.ablation import ABLATION_COLUMNS, VARIANTS, run_ablation, variant_config


class TestVariants:
    def test_baseline_switches_everything_off(self, tiny_cfg):
        config = variant_config(tiny_cfg, VARIANTS["baseline"])
        assert config.get("ssa.enabled") is False
        assert config.get("model.use_grpe") is False
        assert config.get("model.use_abs_pos") is True
        assert config.get("prune.enable_query_prune") is False
        assert config.get("prune.enable_dep_prune") is False
        # la configuración base no se modifica
        assert tiny_cfg.get("prune.enable_query_prune") is True

    def test_full_switches_everything_on(self, tiny_cfg):
        config = variant_config(tiny_cfg, VARIANTS["full"])
        assert config.get("ssa.enabled") is True
        assert config.get("model.use_grpe") is True
        assert config.get("prune.enable_dep_prune") is True


class TestRunAblation:
    def test_table(self, tiny_cfg, tiny_dataset, tmp_path):
        table = run_ablation(tiny_cfg, tiny_dataset, tmp_path / "abl", variants=["baseline", "full"])
        assert list(table.columns) == ABLATION_COLUMNS
        assert table["variant"].tolist() == ["baseline", "full"]
        baseline = table.iloc[0]
        assert baseline["omega_psa_measured"] == baseline["omega_sa"]
        assert baseline["alpha"] == 0.0
        assert table.iloc[1]["omega_psa_measured"] <= table.iloc[1]["omega_sa"]
        on_disk = pd.read_csv(tmp_path / "abl" / "ablation.csv")
        assert on_disk["variant"].tolist() == ["baseline", "full"]
        assert (tmp_path / "abl" / "plus_pruning").exists() is False

    def test_unknown_variant(self, tiny_cfg, tiny_dataset, tmp_path):
        with pytest.raises(ValueError):
            run_ablation(tiny_cfg, tiny_dataset, tmp_path / "abl", variants=["nope"])
