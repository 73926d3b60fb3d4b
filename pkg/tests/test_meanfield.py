import numpy as np
import pytest
from scipy.optimize import brentq

from rfbp.meanfield import (
    MeanFieldModel,
    complete_graph_model,
    free_energy,
    saddle_rhs,
    solve_saddle,
    verify_rlbp_on_complete_graph,
)
from rfbp.models import FieldDistribution, StateSpace, UnaryPotential


def ferro_spin(beta, field_dist):
    states = StateSpace.spin(2)
    return MeanFieldModel(
        states=states,
        g=states.values,
        unary=UnaryPotential.linear_field(),
        beta=beta,
        field_dist=field_dist,
    )


class TestSaddleSolutions:
    def test_subcritical_unique_zero(self):
        model = ferro_spin(0.5, FieldDistribution.delta(0.0))
        sols = solve_saddle(model)
        assert len(sols) == 1
        assert sols[0].m == pytest.approx(0.0, abs=1e-10)
        assert sols[0].residual < 1e-9

    def test_supercritical_tanh_fixed_points(self):
        # independent scalar root of m = tanh(2m)
        m_star = brentq(lambda m: m - np.tanh(2 * m), 0.5, 1.0, xtol=1e-14)
        assert m_star == pytest.approx(0.9575, abs=1e-4)
        model = ferro_spin(2.0, FieldDistribution.delta(0.0))
        sols = solve_saddle(model)
        ms = sorted(s.m for s in sols)
        np.testing.assert_allclose(ms, [-m_star, 0.0, m_star], atol=1e-8)
        # ordered branches share the lowest free energy
        assert sols[0].m == pytest.approx(m_star, abs=1e-8) or sols[0].m == pytest.approx(
            -m_star, abs=1e-8
        )
        assert sols[0].f < sols[-1].f

    def test_strong_field_disorder_prefers_zero(self):
        model = ferro_spin(1.0, FieldDistribution.gaussian(0.0, 9.0))
        sols = solve_saddle(model)
        assert sols[0].m == pytest.approx(0.0, abs=1e-9)
        # grid scan oracle: f has its minimum at m = 0
        grid = np.linspace(-1, 1, 41)
        fs = [free_energy(model, m) for m in grid]
        assert min(fs) == pytest.approx(free_energy(model, 0.0), abs=1e-12)

    def test_symmetric_pairs(self):
        model = ferro_spin(1.8, FieldDistribution.gaussian(0.0, 0.25))
        sols = solve_saddle(model)
        ms = np.array(sorted(s.m for s in sols))
        np.testing.assert_allclose(ms, -ms[::-1], atol=1e-8)

    def test_stationarity_of_free_energy(self):
        model = ferro_spin(1.5, FieldDistribution.gaussian(0.0, 0.25))
        eps = 1e-5
        for sol in solve_saddle(model):
            df = (free_energy(model, sol.m + eps) - free_energy(model, sol.m - eps)) / (2 * eps)
            assert abs(df) < 1e-6

    def test_rhs_bounded_by_g_range(self):
        model = ferro_spin(1.2, FieldDistribution.gaussian(0.0, 1.0))
        for m in (-2.0, -0.3, 0.0, 0.7, 3.0):
            assert -1.0 <= saddle_rhs(model, m) <= 1.0


class TestCompleteGraphAgreement:
    def test_gap_decreases_with_n(self):
        model = ferro_spin(1.5, FieldDistribution.gaussian(0.0, 0.25))
        gaps = [
            verify_rlbp_on_complete_graph(n, model, dict(tol=1e-10))["gap"] for n in (50, 200)
        ]
        assert gaps[1] < gaps[0]

    def test_zero_field_subcritical_scaling(self):
        # symmetric branch: the residual finite-size term is the per-edge
        # entropy correction, beta/(4n) to leading order
        model = ferro_spin(0.5, FieldDistribution.delta(0.0))
        out250 = verify_rlbp_on_complete_graph(250, model, dict(tol=1e-11))
        out1000 = verify_rlbp_on_complete_graph(1000, model, dict(tol=1e-11))
        assert out1000["gap"] < 2e-4
        assert out1000["gap"] == pytest.approx(0.5 / 4000, rel=0.1)
        assert out250["gap"] / out1000["gap"] == pytest.approx(4.0, rel=0.2)

    def test_ordered_phase_needs_polarized_start(self):
        # beta = 2: the lowest saddle is ordered; branch selection must
        # find it even though the unbiased start sits at m = 0
        model = ferro_spin(2.0, FieldDistribution.delta(0.0))
        out = verify_rlbp_on_complete_graph(400, model, dict(tol=1e-10))
        assert out["converged"]
        assert out["gap"] < 2e-3

    def test_model_construction(self):
        model = ferro_spin(1.0, FieldDistribution.gaussian(0.0, 1.0))
        mrf = complete_graph_model(10, model)
        assert mrf.graph.n_edges == 45
        tables = mrf.pair_tables(None)
        np.testing.assert_allclose(tables[0], np.outer(model.g, model.g) / 10)


class TestValidation:
    def test_g_shape(self):
        states = StateSpace.spin(2)
        with pytest.raises(ValueError):
            MeanFieldModel(
                states=states,
                g=np.array([1.0, 2.0, 3.0]),
                unary=UnaryPotential.linear_field(),
                beta=1.0,
                field_dist=FieldDistribution.delta(0.0),
            )

    def test_beta_positive(self):
        states = StateSpace.spin(2)
        with pytest.raises(ValueError):
            MeanFieldModel(
                states=states,
                g=states.values,
                unary=UnaryPotential.linear_field(),
                beta=0.0,
                field_dist=FieldDistribution.delta(0.0),
            )
