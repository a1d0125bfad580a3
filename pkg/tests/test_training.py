"""Entrenamiento: determinismo, calentamiento, pérdidas no finitas y evaluación"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from loguru import logger

from src.analysis.metrics import evaluate
from src.core.tensor import Tensor, no_grad
from src.data.dataset_io import SegDataset
from src.data.synthetic import gen_data
from src.models.apformer_models import SyntheticSpec
from src.segmentation.checkpoint import load_checkpoint, pruning_active_for
from src.segmentation.trainer import HISTORY_COLUMNS, NonFiniteLossError, Trainer
from src.transformer.flops import flops_sa
from src.utils.config import Config
from src.utils.tensor_io import read_tensor


class TestTrainer:
    def test_history_is_reproducible(self, tiny_cfg, tiny_dataset, tmp_path):
        first = Trainer(tiny_cfg, tiny_dataset, tmp_path / "a").train()
        second = Trainer(tiny_cfg, tiny_dataset, tmp_path / "b").train()
        assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
        for name, tensor in first.model.params.items():
            np.testing.assert_array_equal(tensor.data, second.model.params[name].data)

    def test_history_columns_and_checkpoint(self, tiny_cfg, tiny_dataset, tmp_path):
        result = Trainer(tiny_cfg, tiny_dataset, tmp_path / "run").train()
        history = pd.read_csv(tmp_path / "run" / "history.csv")
        assert list(history.columns) == HISTORY_COLUMNS
        assert history["round"].tolist() == [1, 2, 3, 4]
        assert np.all(np.isfinite(history[["l_seg", "l_ssa", "l_g"]].to_numpy()))
        assert result.completed_rounds == 4
        assert (result.checkpoint_dir / "config.cfg").exists()

    def test_warmup_freezes_g_and_disables_pruning(self, tiny_cfg, tiny_dataset):
        trainer = Trainer(tiny_cfg, tiny_dataset)
        result = trainer.train(rounds=2)
        for name in result.model.g_names():
            assert float(result.model.params[name].data) == -2.0
        assert result.history["alpha"].tolist() == [0.0, 0.0]
        assert result.history["lambda"].tolist() == [0.0, 0.0]
        # 1 bloque x 2 cabezas, N = 4, d = 8, d_m = 4
        assert result.history["sa_flops"].tolist() == [2 * flops_sa(4, 8, 4)] * 2

    def test_pruning_starts_after_warmup(self, tiny_cfg, tiny_dataset):
        tiny_cfg.set("prune.g_init", 3.0)
        result = Trainer(tiny_cfg, tiny_dataset).train(rounds=4)
        after = result.history[result.history["round"] > 2]
        assert np.all(after["sa_flops"] <= 2 * flops_sa(4, 8, 4))

    def test_adam_moves_other_parameters(self, tiny_cfg, tiny_dataset):
        trainer = Trainer(tiny_cfg, tiny_dataset)
        before = trainer.model.state_arrays()
        trainer.train(rounds=1)
        assert not np.array_equal(before["head.w"], trainer.model.params["head.w"].data)

    def test_nonfinite_loss_dumps_batch(self, tiny_cfg, tmp_path):
        dataset = SegDataset(
            images=np.full((2, 1, 16, 16), np.nan),
            masks=np.zeros((2, 16, 16), dtype=np.int64),
            names=["a", "b"],
            splits=["train", "train"],
        )
        with pytest.raises(NonFiniteLossError):
            Trainer(tiny_cfg, dataset, tmp_path / "run").train(rounds=1)
        dump = tmp_path / "run" / "nonfinite_batch"
        assert read_tensor(dump / "images.ptn").shape == (2, 1, 16, 16)
        assert (dump / "round.txt").read_text().strip() == "1"

    def test_nonfinite_loss_without_out_dir_warns(self, tiny_cfg):
        dataset = SegDataset(
            images=np.full((2, 1, 16, 16), np.nan),
            masks=np.zeros((2, 16, 16), dtype=np.int64),
            names=["a", "b"],
            splits=["train", "train"],
        )
        messages = []
        logger.add(messages.append, level="WARNING", format="{message}")
        with pytest.raises(NonFiniteLossError):
            Trainer(tiny_cfg, dataset).train(rounds=1)
        assert any("sin volcar" in message for message in messages)


class TestEvaluation:
    def test_metrics_are_reproducible(self, tiny_cfg, tiny_dataset, tmp_path):
        Trainer(tiny_cfg, tiny_dataset, tmp_path / "run").train()
        model, config = load_checkpoint(tmp_path / "run" / "checkpoint")
        assert pruning_active_for(config)
        test_set = tiny_dataset.subset("test")
        first = evaluate(model, test_set, pruning_active=True)
        second = evaluate(model, test_set, pruning_active=True)
        assert first.to_csv_row() == second.to_csv_row()
        assert all(0.0 <= value <= 1.0 for value in first.as_tuple())


@pytest.mark.slow
class TestTrainingTrends:
    """Entrenamientos de cientos de rondas a escala de juguete"""

    def test_loss_decreases(self, tiny_cfg, tiny_dataset):
        tiny_cfg.set("train.rounds", 200)
        tiny_cfg.set("prune.g_frozen_rounds", 50)
        history = Trainer(tiny_cfg, tiny_dataset).train().history
        total = history["l_seg"] + history["l_ssa"] + history["l_g"]
        assert total.tail(20).mean() < total.head(20).mean()

    def test_pruning_reduces_flops(self, tiny_cfg, tiny_dataset):
        tiny_cfg.set("train.rounds", 200)
        tiny_cfg.set("prune.g_frozen_rounds", 50)
        history = Trainer(tiny_cfg, tiny_dataset).train().history
        after = history[history["round"] > 50]
        assert after["sa_flops"].mean() < 2 * flops_sa(4, 8, 4)


TOY_CONFIG = Path(__file__).resolve().parents[1] / "config" / "toy.cfg"


def _toy_config(data_dir, overrides=None) -> Config:
    config = Config(TOY_CONFIG, strict=True)
    config.set("data.dir", str(data_dir))
    for key, value in (overrides or {}).items():
        config.set(key, value)
    return config


@pytest.fixture(scope="module")
def toy_data(tmp_path_factory):
    """500 imágenes 64x64 sembradas, split 350/50/100"""
    data_dir = tmp_path_factory.mktemp("toy_data")
    _, dataset = gen_data(SyntheticSpec.from_config(_toy_config(data_dir)), data_dir)
    return data_dir, dataset


@pytest.mark.slow
class TestToyRuns:
    """Corridas completas con config/toy.cfg"""

    def test_pruning_keeps_dice_and_cuts_flops(self, toy_data):
        data_dir, dataset = toy_data
        test_set = dataset.subset("test")
        assert len(dataset) == 500 and dataset.images.shape[2:] == (64, 64)

        unpruned_config = _toy_config(
            data_dir,
            {"prune.enable_query_prune": False, "prune.enable_dep_prune": False, "train.rounds": 200},
        )
        unpruned = Trainer(unpruned_config, dataset).train().model
        unpruned_dice = evaluate(unpruned, test_set, pruning_active=False).dice
        assert unpruned_dice >= 0.90

        pruned_config = _toy_config(data_dir)
        pruned = Trainer(pruned_config, dataset).train().model
        pruned_dice = evaluate(pruned, test_set, pruning_active=True).dice
        assert pruned_dice >= unpruned_dice - 0.02

        with no_grad():
            _, diagnostics = pruned.forward(Tensor(test_set.images[:8]), pruning_active=True)
        report = pruned.flop_report(diagnostics)
        assert report.omega_psa_measured <= 0.8 * report.omega_sa
        assert report.lambda_ > 0.2

    def test_ssa_lowers_early_segmentation_loss(self, toy_data):
        data_dir, dataset = toy_data
        wins = 0
        for seed in range(5):
            losses = {}
            for enabled in (True, False):
                config = _toy_config(data_dir, {"seed": seed, "ssa.enabled": enabled, "train.rounds": 50})
                history = Trainer(config, dataset).train().history
                losses[enabled] = float(history.loc[history["round"] == 50, "l_seg"].iloc[0])
            wins += int(losses[True] < losses[False])
        if wins < 3:
            logger.warning(f"SSA redujo la pérdida en la ronda 50 solo en {wins}/5 semillas")
        assert wins >= 2
