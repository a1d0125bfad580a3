"""Interfaz de línea de comandos: salidas y códigos de salida"""

import pytest

from src.main import cli
from src.models.apformer_models import ModelConfig
from src.segmentation.checkpoint import save_checkpoint
from src.segmentation.network import SegModel


@pytest.fixture
def config_file(tiny_cfg, tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(tiny_cfg.to_flat_text(), encoding="utf-8")
    return path


class TestFlops:
    def test_reference_row(self, capsys):
        assert cli(["flops", "--n", "256", "--d", "128", "--dm", "64"]) == 0
        header, row = capsys.readouterr().out.strip().splitlines()
        assert header == "N,d,d_m,alpha,lambda,omega_sa,omega_psa_formula,omega_psa_measured"
        assert row.split(",")[5] == "15728640"

    def test_pruned_rates(self, capsys):
        assert cli(["flops", "--n", "256", "--d", "128", "--dm", "64", "--alpha", "0.5", "--lambda", "0.5"]) == 0
        row = capsys.readouterr().out.strip().splitlines()[1]
        assert row.split(",")[6:] == ["8912896", "8912896"]

    def test_global_flag_before_subcommand(self, capsys):
        assert cli(["--seed", "3", "flops", "--n", "1", "--d", "1", "--dm", "1"]) == 0
        assert capsys.readouterr().out.strip().splitlines()[1].split(",")[5] == "6"

    def test_rate_out_of_range_is_runtime_error(self):
        assert cli(["flops", "--n", "4", "--d", "4", "--dm", "2", "--alpha", "1.0"]) == 1


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert cli(["train", "--config", str(tmp_path / "missing.cfg")]) == 1

    def test_unknown_flag(self):
        assert cli(["flops", "--bogus"]) == 2

    @pytest.mark.parametrize("seed", ["-3", "abc", str(2**64)])
    def test_seed_outside_u64_is_usage_error(self, seed):
        assert cli(["flops", "--n", "1", "--d", "1", "--dm", "1", "--seed", seed]) == 2

    def test_largest_u64_seed_accepted(self, capsys):
        assert cli(["flops", "--n", "1", "--d", "1", "--dm", "1", "--seed", str(2**64 - 1)]) == 0

    def test_missing_subcommand(self):
        assert cli([]) == 2

    def test_help(self):
        assert cli(["--help"]) == 0


class TestDataAndEval:
    def test_gen_data(self, config_file, tmp_path):
        out = tmp_path / "generated"
        assert cli(["gen-data", "--config", str(config_file), "--out", str(out), "--count", "3"]) == 0
        assert len((out / "index.txt").read_text().strip().splitlines()) == 3
        assert len(list((out / "images").glob("*.ptn"))) == 3

    def test_eval_prints_metrics(self, config_file, tiny_cfg, tiny_dataset, tmp_path, capsys):
        model = SegModel(ModelConfig.from_config(tiny_cfg), seed=0)
        checkpoint = save_checkpoint(model, tiny_cfg, tmp_path / "ckpt", completed_rounds=3)
        out = tmp_path / "eval"
        code = cli(
            [
                "eval",
                "--config", str(config_file),
                "--checkpoint", str(checkpoint),
                "--data", tiny_cfg.get("data.dir"),
                "--out", str(out),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        lines = printed.strip().splitlines()
        assert lines[0] == "dice,iou,acc,se,sp"
        assert len(lines[1].split(",")) == 5
        assert (out / "metrics.csv").read_text(encoding="utf-8") == printed

    def test_eval_missing_checkpoint(self, config_file, tmp_path):
        assert cli(["eval", "--config", str(config_file), "--checkpoint", str(tmp_path / "none")]) == 1
