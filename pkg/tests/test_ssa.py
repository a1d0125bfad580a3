"""Pérdidas auto-supervisadas de la atención"""

import numpy as np
import pytest

from src.core.gradcheck import grad_check
from src.core.tensor import Tensor, parameter
from src.models.apformer_models import EntropyReduction, SsaConfig
from src.transformer.ssa_losses import (
    entropy_loss,
    row_entropies,
    row_entropy,
    ssa_loss,
    sym_loss,
    symmetry_score,
)

from .conftest import random_attention


def _cosine_oracle(a: np.ndarray) -> float:
    num = sum(a[i, j] * a[j, i] for i in range(len(a)) for j in range(len(a)))
    return num / (np.sqrt((a**2).sum()) * np.sqrt((a.T**2).sum()))


class TestSymmetry:
    def test_symmetric_matrix_has_zero_loss(self, rng):
        base = rng.uniform(size=(5, 5))
        symmetric = Tensor(base + base.T)
        assert symmetry_score(symmetric).item() == pytest.approx(1.0, abs=1e-12)
        assert sym_loss(symmetric, 0.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_supports(self):
        a = Tensor(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert symmetry_score(a).item() == 0.0
        assert sym_loss(a, 0.0).item() == 1.0

    def test_matches_scalar_oracle(self, rng):
        a = random_attention(rng, 4, 4)
        assert symmetry_score(Tensor(a)).item() == pytest.approx(_cosine_oracle(a), abs=1e-12)
        expected = max(1.0 - _cosine_oracle(a) - 0.3, 0.0)
        assert sym_loss(Tensor(a), 0.3).item() == pytest.approx(expected, abs=1e-12)

    def test_transpose_gives_identical_score(self, rng):
        a = random_attention(rng, 6, 6)
        assert symmetry_score(Tensor(a)).item() == symmetry_score(Tensor(a.T)).item()

    def test_scale_invariant(self, rng):
        a = random_attention(rng, 5, 5)
        np.testing.assert_allclose(symmetry_score(Tensor(a)).item(), symmetry_score(Tensor(7.0 * a)).item())

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            symmetry_score(Tensor(np.zeros((3, 3))))


class TestEntropy:
    def test_uniform_row_is_one(self):
        value = row_entropy(Tensor(np.full((4, 4), 0.25)), 2).item()
        assert abs(value - 1.0) <= 1e-12

    def test_half_row(self):
        row = Tensor(np.array([[0.5, 0.5, 0.0, 0.0]]))
        assert abs(row_entropy(row, 0).item() - 0.5) <= 1e-12

    def test_one_hot_row_is_zero(self):
        np.testing.assert_allclose(row_entropies(Tensor(np.eye(3))).data, 0.0, atol=1e-10)

    def test_single_column_rejected(self):
        with pytest.raises(ValueError):
            row_entropies(Tensor(np.ones((1, 1))))

    def test_uniform_rows_loss(self):
        uniform = Tensor(np.full((5, 5), 0.2))
        assert entropy_loss(uniform, 0.6).item() == pytest.approx(0.4, abs=1e-12)

    def test_min_reduction_of_mixed_rows(self):
        # entropías {0.5, 1.0} sobre N = 4
        rows = Tensor(np.array([[0.5, 0.5, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]]))
        assert entropy_loss(rows, 0.3).item() == pytest.approx(0.2, abs=1e-12)
        assert entropy_loss(rows, 0.3, EntropyReduction.MEAN).item() == pytest.approx(0.45, abs=1e-12)

    def test_one_hot_row_floors_loss(self):
        rows = Tensor(np.array([[1.0, 0.0, 0.0], [0.4, 0.3, 0.3]]))
        assert entropy_loss(rows, 0.1).item() == 0.0

    def test_values_in_unit_interval(self, rng):
        values = row_entropies(Tensor(random_attention(rng, 30, 9))).data
        assert np.all((values >= 0.0) & (values <= 1.0 + 1e-12))


class TestSsaLoss:
    def test_weights_combine(self):
        config = SsaConfig(alpha_sym=0.0, alpha_en=0.0, beta_1=0.8, beta_2=0.2)
        a = Tensor(np.array([[0.0, 1.0], [0.5, 0.5]]))
        expected = 0.8 * sym_loss(a, 0.0).item() + 0.2 * entropy_loss(a, 0.0).item()
        assert ssa_loss(a, config).item() == pytest.approx(expected, abs=1e-12)

    def test_kept_rows_use_square_sub_block(self, rng):
        config = SsaConfig()
        full = random_attention(rng, 6, 6)
        kept = np.array([1, 4])
        pruned = Tensor(full[kept])
        expected = (
            config.beta_1 * sym_loss(Tensor(full[kept][:, kept]), config.alpha_sym).item()
            + config.beta_2 * entropy_loss(pruned, config.alpha_en).item()
        )
        assert ssa_loss(pruned, config, kept).item() == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("reduction", list(EntropyReduction))
    def test_gradient(self, rng, reduction):
        logits = parameter(rng.normal(size=(6, 6)), name="logits")
        config = SsaConfig(alpha_sym=0.05, alpha_en=0.05, entropy_reduction=reduction)
        report = grad_check(lambda: ssa_loss(logits.softmax(axis=1), config), [logits], eps=1e-6)
        assert report.passed(1e-5), report
