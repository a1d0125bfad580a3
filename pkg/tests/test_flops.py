"""Conteo de FLOPs: fórmulas cerradas, lectura as-printed y reportes"""

import numpy as np
import pytest

from src.models.apformer_models import FlopMode, FlopReport, PruneDecision
from src.transformer.flops import (
    flop_report,
    flops_psa,
    flops_sa,
    nominal_mask,
    pruned_attention_kernel,
    report_from_rates,
)
from src.transformer.pruning import make_decision


class TestClosedForm:
    def test_reference_size(self):
        assert flops_sa(256, 128, 64) == 15_728_640

    def test_smallest(self):
        assert flops_sa(1, 1, 1) == 6

    def test_pruned_reference(self):
        assert flops_psa(256, 128, 64, 0.5, 0.5, FlopMode.KEPT_FRACTION) == 8_912_896

    def test_no_pruning_matches_unpruned(self, rng):
        for _ in range(100):
            n, d, d_m = (int(v) for v in rng.integers(1, 300, 3))
            assert flops_psa(n, d, d_m, 0.0, 0.0) == flops_sa(n, d, d_m)

    def test_as_printed_disagrees_without_pruning(self):
        assert flops_psa(16, 8, 4, 0.0, 0.0, FlopMode.AS_PRINTED) != flops_sa(16, 8, 4)
        assert flops_psa(16, 8, 4, 0.0, 0.0, FlopMode.AS_PRINTED) == 3 * 16 * 8 * 4

    def test_monotone_in_rates(self):
        values = [flops_psa(64, 32, 16, a, a) for a in (0.0, 0.25, 0.5, 0.75)]
        assert values == sorted(values, reverse=True)

    @pytest.mark.parametrize("alpha, lam", [(1.0, 0.0), (0.0, 1.0), (-0.1, 0.0), (0.0, 1.5)])
    def test_rates_out_of_range(self, alpha, lam):
        with pytest.raises(ValueError):
            flops_psa(16, 8, 4, alpha, lam)

    def test_dimensions_must_be_positive(self):
        with pytest.raises(ValueError):
            flops_sa(0, 8, 4)


class TestInstrumentedConvention:
    def test_full_kernel_equals_unpruned(self, rng):
        n, d, d_m = 12, 6, 3
        _, _, count = pruned_attention_kernel(
            rng.normal(size=(n, d)),
            rng.normal(size=(d, d_m)),
            rng.normal(size=(d, d_m)),
            rng.normal(size=(d, d_m)),
            np.arange(n),
            np.ones((n, n)),
        )
        assert count == flops_sa(n, d, d_m)

    def test_nominal_mask_realizes_rates(self):
        # N=8: 4 queries, la mitad de las dependencias
        kept, mask = nominal_mask(8, 0.5, 0.5)
        np.testing.assert_array_equal(kept, np.arange(4))
        assert mask.shape == (4, 8)
        assert int(mask.sum()) == 16
        assert np.all(mask[:, 0] == 1.0)

    def test_nominal_mask_keeps_one_entry_per_row(self):
        _, mask = nominal_mask(10, 0.0, 0.99)
        assert np.all(mask.sum(axis=1) >= 1.0)


class TestReports:
    def test_csv_row(self):
        report = report_from_rates(256, 128, 64, 0.0, 0.0)
        assert FlopReport.CSV_HEADER == "N,d,d_m,alpha,lambda,omega_sa,omega_psa_formula,omega_psa_measured"
        assert report.to_csv_row() == "256,128,64,0.000000,0.000000,15728640,15728640,15728640"

    def test_reachable_rates_agree(self):
        report = report_from_rates(256, 128, 64, 0.5, 0.5)
        assert report.omega_psa_formula == report.omega_psa_measured == 8_912_896

    def test_small_reachable_rates(self):
        report = report_from_rates(8, 4, 2, 0.5, 0.5)
        assert report.omega_psa_measured == flops_psa(8, 4, 2, 0.5, 0.5)

    def test_flop_report_over_heads(self, rng):
        n, d, d_m = 6, 4, 2
        decisions = []
        for kept_count in (3, 6):
            kept = np.arange(kept_count)
            mask = (rng.random((kept_count, n)) < 0.5).astype(np.float64)
            mask[:, 0] = 1.0
            _, _, count = pruned_attention_kernel(
                rng.normal(size=(n, d)),
                rng.normal(size=(d, d_m)),
                rng.normal(size=(d, d_m)),
                rng.normal(size=(d, d_m)),
                kept,
                mask,
            )
            decisions.append(make_decision(kept, mask, np.zeros(kept_count), n, count))
        report = flop_report(n, d, d_m, decisions)
        assert report.omega_sa == 2 * flops_sa(n, d, d_m)
        assert report.omega_psa_measured == sum(dec.multiplies for dec in decisions)
        assert report.omega_psa_measured == report.omega_psa_formula
        assert report.alpha == pytest.approx(0.25)
        zeros = sum(int((dec.mask == 0).sum()) for dec in decisions)
        assert report.lambda_ == pytest.approx(zeros / (3 * n + 6 * n))

    def test_flop_report_needs_decisions(self):
        with pytest.raises(ValueError):
            flop_report(4, 4, 2, [])

    def test_flop_report_needs_kernel_counts(self):
        decision = make_decision(np.arange(2), np.ones((2, 4)), np.zeros(2), 4)
        with pytest.raises(ValueError, match="kernel"):
            flop_report(4, 4, 2, [decision])

    def test_decision_rates(self):
        decision = PruneDecision(
            kept_indices=np.array([0, 2]),
            mask=np.array([[1.0, 0.0, 1.0, 0.0], [1.0, 1.0, 1.0, 1.0]]),
            thresholds=np.zeros(2),
            measured_alpha=0.0,
            measured_lambda=0.0,
        )
        rebuilt = make_decision(decision.kept_indices, decision.mask, decision.thresholds, 4)
        assert rebuilt.measured_alpha == 0.5
        assert rebuilt.measured_lambda == 0.25
