import numpy as np
import pytest

from rfbp import exact
from rfbp.graphs import Graph, path_graph, random_tree, square_lattice
from rfbp.lbp import (
    MessageState,
    beliefs_from_messages,
    bethe_free_energy,
    magnetization,
    run_lbp,
    run_lbp_grid_batch,
)
from rfbp.models import FieldDistribution, MrfModel, PairPotential, StateSpace, UnaryPotential


def spin_model(graph, q=2, beta=1.0):
    return MrfModel(graph, StateSpace.spin(q), UnaryPotential.linear_field(), PairPotential.product(), beta=beta)


def reference_lbp(graph, lphi, lpsi, sweeps=4000):
    """Independent dict-based sum-product implementation (the oracle).

    Plain flooding with per-message normalization, no damping, no shared
    code with the engine under test. Returns beliefs and the Bethe free
    energy computed directly from their defining sums.
    """
    q = lphi.shape[1]
    msgs = {}
    for i, j in graph.edges:
        msgs[(int(i), int(j))] = np.full(q, 1.0 / q)
        msgs[(int(j), int(i))] = np.full(q, 1.0 / q)
    psi = {}
    for k, (i, j) in enumerate(graph.edges):
        psi[(int(i), int(j))] = np.exp(lpsi[k])
        psi[(int(j), int(i))] = np.exp(lpsi[k]).T
    for _ in range(sweeps):
        new = {}
        for (i, j), _ in msgs.items():
            prod = np.exp(lphi[i]).copy()
            for k in graph.neighbors(i):
                if k != j:
                    prod = prod * msgs[(int(k), i)]
            m = prod @ psi[(i, j)]
            new[(i, j)] = m / m.sum()
        delta = max(np.abs(new[k] - msgs[k]).max() for k in msgs)
        msgs = new
        if delta < 1e-13:
            break
    beliefs = np.zeros_like(lphi)
    for i in range(graph.n_vertices):
        b = np.exp(lphi[i]).copy()
        for k in graph.neighbors(i):
            b = b * msgs[(int(k), i)]
        beliefs[i] = b / b.sum()
    pair = {}
    for k, (i, j) in enumerate(graph.edges):
        i, j = int(i), int(j)
        ci = np.exp(lphi[i]).copy()
        for t in graph.neighbors(i):
            if t != j:
                ci = ci * msgs[(int(t), i)]
        cj = np.exp(lphi[j]).copy()
        for t in graph.neighbors(j):
            if t != i:
                cj = cj * msgs[(int(t), j)]
        b = ci[:, None] * np.exp(lpsi[k]) * cj[None, :]
        pair[k] = b / b.sum()
    xlogx = lambda p: np.sum(p * np.log(np.where(p > 0, p, 1.0)))
    fe = 0.0
    for i in range(graph.n_vertices):
        fe -= float(lphi[i] @ beliefs[i])
        fe += xlogx(beliefs[i])
    for k, (i, j) in enumerate(graph.edges):
        fe -= float(np.sum(lpsi[k] * pair[k]))
        fe += xlogx(pair[k]) - xlogx(beliefs[int(i)]) - xlogx(beliefs[int(j)])
    return beliefs, pair, fe


def tree_diameter(graph):
    def far(start):
        dist = {start: 0}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in graph.neighbors(v):
                if int(w) not in dist:
                    dist[int(w)] = dist[v] + 1
                    stack.append(int(w))
        far_v = max(dist, key=dist.get)
        return far_v, dist[far_v]

    v, _ = far(0)
    _, d = far(v)
    return d


class TestTreesAreExact:
    def test_path_matches_enumeration(self):
        rng = np.random.default_rng(0)
        graph = path_graph(8)
        model = spin_model(graph, q=3)
        h = rng.normal(0, 1, 8)
        J = rng.normal(0, 0.5, 7)
        res = exact.enumerate(model, h, J)
        _, beliefs, report = run_lbp(model, h, J, tol=1e-12)
        assert report.converged
        np.testing.assert_allclose(beliefs.unary, res.unary_marginals, atol=1e-8)
        np.testing.assert_allclose(beliefs.pair, res.pair_marginals, atol=1e-8)
        assert report.bethe_free_energy == pytest.approx(res.free_energy, abs=1e-8)

    def test_random_trees_match_enumeration(self):
        rng = np.random.default_rng(1)
        for seed in range(6):
            n = int(rng.integers(3, 10))
            q = int(rng.integers(2, 5))
            graph = random_tree(n, seed=seed)
            model = spin_model(graph, q=q)
            h = rng.normal(0, 1, n)
            J = rng.normal(0, 0.5, graph.n_edges)
            res = exact.enumerate(model, h, J)
            _, beliefs, report = run_lbp(model, h, J, tol=1e-12)
            np.testing.assert_allclose(beliefs.unary, res.unary_marginals, atol=1e-8)
            assert report.bethe_free_energy == pytest.approx(res.free_energy, abs=1e-8)

    def test_tree_converges_within_diameter_plus_one(self):
        for seed in range(4):
            graph = random_tree(9, seed=seed)
            model = spin_model(graph, q=2)
            rng = np.random.default_rng(seed)
            h = rng.normal(0, 1, 9)
            J = rng.normal(0, 0.4, graph.n_edges)
            _, _, report = run_lbp(model, h, J, schedule="sequential", damping=0.0, tol=1e-9)
            assert report.converged
            assert report.iterations <= tree_diameter(graph) + 1


class TestSingleVertex:
    def test_belief_is_softmax_of_potential(self):
        graph = Graph(1, np.zeros((0, 2), dtype=np.int64))
        model = spin_model(graph, q=4, beta=0.8)
        h = np.array([0.9])
        _, beliefs, report = run_lbp(model, h, np.zeros(0))
        assert report.converged and report.iterations == 1
        scores = 0.8 * 0.9 * model.states.values
        expected = np.exp(scores) / np.exp(scores).sum()
        np.testing.assert_allclose(beliefs.unary[0], expected, atol=1e-12)


class TestAgainstIndependentImplementation:
    def test_3x3_lattice(self):
        graph = square_lattice(3, 3)
        model = spin_model(graph)
        h = np.zeros(9)
        J = np.full(graph.n_edges, 0.2)
        _, beliefs, report = run_lbp(model, h, J, tol=1e-12)
        lphi = model.unary_tables(h)
        lpsi = model.pair_tables(J)
        ref_b, ref_pair, ref_fe = reference_lbp(graph, lphi, lpsi)
        np.testing.assert_allclose(beliefs.unary, ref_b, atol=1e-9)
        assert report.bethe_free_energy == pytest.approx(ref_fe, abs=1e-9)
        assert magnetization(beliefs, model.states) == pytest.approx(0.0, abs=1e-10)

    def test_random_loopy_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            graph = square_lattice(3, 4)
            model = spin_model(graph, q=3)
            h = rng.normal(0, 0.8, graph.n_vertices)
            J = rng.normal(0.1, 0.2, graph.n_edges)
            _, beliefs, report = run_lbp(model, h, J, tol=1e-12)
            ref_b, _, ref_fe = reference_lbp(graph, model.unary_tables(h), model.pair_tables(J))
            np.testing.assert_allclose(beliefs.unary, ref_b, atol=1e-8)
            assert report.bethe_free_energy == pytest.approx(ref_fe, abs=1e-8)


class TestSchedulesAgree:
    @pytest.mark.parametrize("boundary", ["free", "periodic"])
    def test_all_schedules_same_fixed_point(self, boundary):
        rng = np.random.default_rng(9)
        graph = square_lattice(4, 4, boundary)
        model = spin_model(graph, q=3)
        h = rng.normal(0, 1, graph.n_vertices)
        J = rng.normal(0.05, 0.15, graph.n_edges)
        results = {}
        for schedule in ("sequential", "parallel", "grid"):
            _, beliefs, report = run_lbp(model, h, J, schedule=schedule, tol=1e-12)
            assert report.converged
            results[schedule] = (beliefs, report.bethe_free_energy)
        for schedule in ("parallel", "grid"):
            np.testing.assert_allclose(
                results[schedule][0].unary, results["sequential"][0].unary, atol=1e-9
            )
            np.testing.assert_allclose(
                results[schedule][0].pair, results["sequential"][0].pair, atol=1e-9
            )
            assert results[schedule][1] == pytest.approx(results["sequential"][1], abs=1e-9)

    def test_grid_needs_lattice(self):
        model = spin_model(path_graph(4))
        with pytest.raises(ValueError):
            run_lbp(model, np.zeros(4), np.zeros(3), schedule="grid")


class TestInvariants:
    def setup_method(self):
        rng = np.random.default_rng(13)
        self.graph = square_lattice(4, 3)
        self.model = spin_model(self.graph, q=3)
        self.h = rng.normal(0, 1, self.graph.n_vertices)
        self.J = np.full(self.graph.n_edges, 0.25)
        self.state, self.beliefs, self.report = run_lbp(self.model, self.h, self.J, tol=1e-11)

    def test_messages_normalized_positive(self):
        assert np.all(self.state.messages > 0)
        np.testing.assert_allclose(self.state.messages.sum(axis=1), 1.0, atol=1e-12)

    def test_beliefs_normalized(self):
        np.testing.assert_allclose(self.beliefs.unary.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(self.beliefs.pair.sum(axis=(1, 2)), 1.0, atol=1e-10)

    def test_marginal_consistency_at_convergence(self):
        for k, (i, j) in enumerate(self.graph.edges):
            np.testing.assert_allclose(
                self.beliefs.pair[k].sum(axis=1), self.beliefs.unary[i], atol=1e-8
            )
            np.testing.assert_allclose(
                self.beliefs.pair[k].sum(axis=0), self.beliefs.unary[j], atol=1e-8
            )

    def test_residual_below_tol_when_converged(self):
        assert self.report.converged
        assert self.report.residual <= 1e-11

    def test_free_energy_invariant_under_message_rescaling(self):
        rng = np.random.default_rng(3)
        scales = rng.uniform(0.2, 6.0, size=(len(self.state.messages), 1))
        scaled = MessageState(self.state.messages * scales)
        beliefs2 = beliefs_from_messages(self.model, self.h, self.J, scaled)
        fe2 = bethe_free_energy(self.model, self.h, self.J, beliefs2)
        assert fe2 == pytest.approx(self.report.bethe_free_energy, abs=1e-10)

    def test_non_convergence_flagged_not_raised(self):
        _, _, report = run_lbp(self.model, self.h, np.full(self.graph.n_edges, 3.0), max_iter=3)
        assert not report.converged
        assert report.iterations == 3


class TestMagnetization:
    def test_uniform_is_zero(self):
        beliefs_unary = np.full((5, 3), 1 / 3)
        pair = np.zeros((0, 3, 3))
        from rfbp.lbp import BeliefSet

        assert magnetization(BeliefSet(beliefs_unary, pair), StateSpace.spin(3)) == pytest.approx(0.0)

    def test_point_mass_is_one(self):
        from rfbp.lbp import BeliefSet

        b = np.zeros((4, 2))
        b[:, 1] = 1.0
        assert magnetization(BeliefSet(b, np.zeros((0, 2, 2))), StateSpace.spin(2)) == pytest.approx(1.0)

    def test_tree_matches_exact_moment(self):
        rng = np.random.default_rng(2)
        graph = random_tree(7, seed=3)
        model = spin_model(graph, q=3)
        h = rng.normal(0, 1, 7)
        J = rng.normal(0, 0.3, graph.n_edges)
        res = exact.enumerate(model, h, J)
        _, beliefs, _ = run_lbp(model, h, J, tol=1e-12)
        expected = float(np.mean(res.unary_marginals @ model.states.values))
        assert magnetization(beliefs, model.states) == pytest.approx(expected, abs=1e-8)


class TestGridBatch:
    @pytest.mark.parametrize("boundary", ["free", "periodic"])
    @pytest.mark.parametrize("disordered", [False, True])
    def test_matches_per_sample_runs(self, boundary, disordered):
        rng = np.random.default_rng(21)
        graph = square_lattice(4, 5, boundary)
        model = MrfModel(
            graph,
            StateSpace.spin(3),
            UnaryPotential.linear_field(),
            PairPotential.product(),
            beta=1.0,
            fields=FieldDistribution.gaussian(0.0, 1.0),
        )
        J = rng.normal(0.1, 0.15, graph.n_edges) if disordered else np.full(graph.n_edges, 0.2)
        fields = rng.normal(0, 1, (5, graph.n_vertices))
        res = run_lbp_grid_batch(model, fields, J, tol=1e-11, damping=0.5)
        assert res.converged.all()
        for s in range(5):
            _, beliefs, report = run_lbp(model, fields[s], J, schedule="sequential", tol=1e-11, damping=0.5)
            np.testing.assert_allclose(res.unary[s], beliefs.unary, atol=1e-9)
            assert res.free_energy[s] == pytest.approx(report.bethe_free_energy, abs=1e-9)
            assert res.magnetization[s] == pytest.approx(magnetization(beliefs, model.states), abs=1e-9)

    def test_requires_lattice(self):
        model = spin_model(path_graph(4))
        with pytest.raises(ValueError):
            run_lbp_grid_batch(model, np.zeros((2, 4)), np.zeros(3))
