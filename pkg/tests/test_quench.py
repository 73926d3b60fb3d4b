import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss
from scipy.stats import chi2

from rfbp.graphs import path_graph, square_lattice
from rfbp.lbp import run_lbp
from rfbp.models import (
    FieldDistribution,
    InteractionEnsemble,
    MrfModel,
    PairPotential,
    StateSpace,
    UnaryPotential,
)
from rfbp.quench import QuenchStats, mc_quenched_average, stats_csv_row, summarize


def spin_model(graph, q=2, fields=None):
    return MrfModel(
        graph,
        StateSpace.spin(q),
        UnaryPotential.linear_field(),
        PairPotential.product(),
        beta=1.0,
        fields=fields,
    )


class TestDegenerateCases:
    def test_delta_fields_fixed_couplings(self):
        graph = square_lattice(3, 3)
        h = np.linspace(-1, 1, 9)
        model = spin_model(graph, fields=FieldDistribution.delta(h))
        out = mc_quenched_average(model, InteractionEnsemble.fixed(0.2), n_field_samples=5, seed=0)
        fe = out["free_energy"]
        assert fe.std_dev < 1e-12  # identical realizations up to float noise
        _, _, report = run_lbp(model, h, np.full(graph.n_edges, 0.2))
        assert fe.mean == pytest.approx(report.bethe_free_energy / 9, abs=1e-9)
        assert fe.n_samples == 5
        assert fe.n_excluded == 0

    def test_validation(self):
        model = spin_model(square_lattice(3, 3), fields=FieldDistribution.gaussian(0.0, 1.0))
        with pytest.raises(ValueError):
            mc_quenched_average(model, None, n_field_samples=3)  # product needs ensemble
        with pytest.raises(ValueError):
            mc_quenched_average(model, InteractionEnsemble.fixed(0.1), n_field_samples=0)

    def test_all_failed_raises(self):
        model = spin_model(square_lattice(4, 4), fields=FieldDistribution.gaussian(0.0, 0.01))
        with pytest.raises(RuntimeError):
            mc_quenched_average(
                model,
                InteractionEnsemble.fixed(3.0),
                n_field_samples=4,
                seed=1,
                lbp_options=dict(max_iter=2, damping=0.0),
            )


class TestTwoVertexTreeOracle:
    def test_mc_matches_quadrature(self):
        # exact quenched average of the tree free energy by 2-D
        # Gauss-Hermite quadrature; LBP is exact on the tree, so the MC
        # mean must agree within sampling error
        J, sigma = 0.2, 1.0
        x, w = hermgauss(64)
        h = np.sqrt(2.0) * sigma * x
        H1, H2 = np.meshgrid(h, h, indexing="ij")
        W = np.outer(w, w) / np.pi
        ln_z = np.log(2 * np.exp(J) * np.cosh(H1 + H2) + 2 * np.exp(-J) * np.cosh(H1 - H2))
        oracle = float(-(W * ln_z).sum()) / 2  # per variable

        graph = path_graph(2)
        model = spin_model(graph, fields=FieldDistribution.gaussian(0.0, sigma**2))
        out = mc_quenched_average(model, InteractionEnsemble.fixed(J), n_field_samples=10_000, seed=7)
        fe = out["free_energy"]
        assert abs(fe.mean - oracle) < 3 * fe.std_error
        assert fe.std_error == pytest.approx(fe.std_dev / np.sqrt(fe.n_samples), abs=1e-15)


class TestReproducibilityAndStreams:
    def setup_method(self):
        self.model = spin_model(square_lattice(4, 4), fields=FieldDistribution.gaussian(0.0, 1.0))
        self.ens = InteractionEnsemble.gaussian(0.0, 0.04)

    def test_same_seed_same_stats(self):
        a = mc_quenched_average(self.model, self.ens, 20, 2, seed=5)
        b = mc_quenched_average(self.model, self.ens, 20, 2, seed=5)
        assert a["free_energy"] == b["free_energy"]
        assert a["magnetization"] == b["magnetization"]

    def test_different_seed_different_stats(self):
        a = mc_quenched_average(self.model, self.ens, 20, seed=5)
        b = mc_quenched_average(self.model, self.ens, 20, seed=6)
        assert a["free_energy"].mean != b["free_energy"].mean

    def test_worker_count_does_not_change_results(self):
        a = mc_quenched_average(self.model, self.ens, 24, 2, seed=9, n_workers=1)
        b = mc_quenched_average(self.model, self.ens, 24, 2, seed=9, n_workers=2)
        assert a["free_energy"] == b["free_energy"]

    def test_batched_path_matches_per_sample_path(self):
        # grid batching is an engine choice, not a semantic one
        fast = mc_quenched_average(self.model, self.ens, 16, seed=3, return_samples=True)
        slow = mc_quenched_average(
            self.model,
            self.ens,
            16,
            seed=3,
            lbp_options=dict(schedule="sequential"),
            return_samples=True,
        )
        np.testing.assert_allclose(
            fast["samples"]["free_energy"], slow["samples"]["free_energy"], atol=1e-8
        )
        np.testing.assert_allclose(
            fast["samples"]["magnetization"], slow["samples"]["magnetization"], atol=1e-8
        )

    def test_magnetization_abs_key(self):
        out = mc_quenched_average(self.model, self.ens, 10, seed=2)
        assert out["magnetization_abs"].mean >= abs(out["magnetization"].mean) - 1e-12


class TestErrorScaling:
    def test_stderr_scales_with_subsampling(self):
        # group means of size 100 should have variance var/100; the
        # scaled statistic follows chi-squared with n_groups - 1 dof
        graph = path_graph(2)
        model = spin_model(graph, fields=FieldDistribution.gaussian(0.0, 1.0))
        out = mc_quenched_average(
            model, InteractionEnsemble.fixed(0.2), n_field_samples=2000, seed=31, return_samples=True
        )
        vals = out["samples"]["free_energy"]
        groups = vals.reshape(20, 100).mean(axis=1)
        stat = groups.var(ddof=1) * 100 * 19 / vals.var(ddof=1)
        lo, hi = chi2.ppf(0.005, 19), chi2.ppf(0.995, 19)
        assert lo < stat < hi


class TestCsvRow:
    def test_format(self):
        stats = QuenchStats(mean=1.5, std_dev=0.2, std_error=0.02, n_samples=100, n_excluded=1)
        row = stats_csv_row({"J": 0.2, "sigma": 1.0}, stats)
        assert row == "0.2,1.0,1.5,0.2,0.02,100,1"

    def test_summarize_single_value(self):
        s = summarize(np.array([2.0]))
        assert s.std_dev == 0.0 and s.n_samples == 1
