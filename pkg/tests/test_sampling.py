"""
Tests for the Chimera topology, energy models and samplers
"""
import itertools

import numpy as np
import pytest

from app.core.errors import SamplerError, TopologyError
from app.sampling.chimera import build, graph_for_hidden, hidden_subgraph, to_edge_list, write_edge_list
from app.sampling.energy import ClampSet, EnergyModel, to_ising
from app.sampling.samplers import (
    AnnealSampler, GibbsSampler, anneal_sample, exact_distribution, geometric_schedule, gibbs_sample,
    moments, total_variation, weighted_moments,
)
from app.sampling.validation import ValidationConfig, random_chimera_model, validate_samplers


def _small_model() -> EnergyModel:
    return EnergyModel([0.3, -0.5, 0.2], [[0, 1], [1, 2], [0, 2]], [0.8, -0.6, 0.4])


class TestChimera:
    """Test cases for Chimera graph construction."""

    # ==================== Structure ====================

    def test_counts_for_all_small_grids(self):
        """Test node and edge counts for every grid up to 8x8."""
        for m, n in itertools.product(range(1, 9), repeat=2):
            g = build(m, n)
            assert g.node_count == 8 * m * n
            assert g.edge_count == 16 * m * n + 4 * m * (n - 1) + 4 * (m - 1) * n

    def test_five_by_five_has_200_nodes(self):
        """Test the grid used for 200 hidden units."""
        assert build(5, 5).node_count == 200
        assert graph_for_hidden(200).node_count == 200

    def test_edges_are_sorted_and_oriented(self):
        """Test that every edge has u < v and the list is sorted."""
        g = build(2, 3)
        assert np.all(g.edges[:, 0] < g.edges[:, 1])
        assert [tuple(e) for e in g.edges.tolist()] == sorted(tuple(e) for e in g.edges.tolist())

    def test_cell_is_complete_bipartite(self):
        """Test that a single cell is K4,4."""
        g = build(1, 1)
        assert g.edge_set() == {(a, b) for a in range(4) for b in range(4, 8)}

    def test_inter_cell_links(self):
        """Test like-indexed vertical and horizontal couplers."""
        g = build(2, 2)
        edges = g.edge_set()
        # vertical: node k of cell (0,0) to node k of cell (1,0)
        assert (0, 16) in edges
        # horizontal: node 4 of cell (0,0) to node 4 of cell (0,1)
        assert (4, 12) in edges
        assert (0, 8) not in edges

    def test_adjacency_is_symmetric(self):
        """Test that the dense adjacency is symmetric with zero diagonal."""
        adj = build(2, 2).adjacency()
        assert np.array_equal(adj, adj.T)
        assert not adj.diagonal().any()

    # ==================== Subgraphs ====================

    def test_hidden_subgraph_is_induced(self):
        """Test that the prefix subgraph keeps exactly the edges inside the prefix."""
        g = build(2, 2)
        sub = hidden_subgraph(g, 12)
        expected = {(u, v) for u, v in g.edge_set() if u < 12 and v < 12}
        assert sub.node_count == 12
        assert sub.edge_set() == expected

    @pytest.mark.parametrize("h", [0, 33])
    def test_hidden_subgraph_bounds(self, h):
        """Test that sizes outside the graph fail."""
        with pytest.raises(TopologyError):
            hidden_subgraph(build(2, 2), h)

    def test_invalid_dimensions(self):
        """Test that non-positive dimensions fail."""
        with pytest.raises(TopologyError):
            build(0, 3)

    def test_edge_list_text(self):
        """Test the one-pair-per-line edge list."""
        text = to_edge_list(build(1, 1))
        assert text.splitlines()[0] == "0 4"
        assert len(text.splitlines()) == 16

    def test_edge_list_file(self, tmp_path):
        """Test that the written file holds one line per edge of the graph."""
        g = graph_for_hidden(12)
        write_edge_list(g, tmp_path / "edges.txt")
        pairs = {tuple(int(x) for x in line.split()) for line in (tmp_path / "edges.txt").read_text().splitlines()}
        assert pairs == g.edge_set()


class TestEnergyModel:
    """Test cases for energies, clamps and the Ising map."""

    def test_energy_of_known_state(self):
        """Test the energy formula on one state."""
        model = _small_model()
        # s = (1, 1, 0): -(0.3 - 0.5) - 0.8
        assert model.energy([1, 1, 0]) == pytest.approx(-0.6)

    def test_batch_energy_matches_single(self):
        """Test that batched energies agree with per-state ones."""
        model = _small_model()
        states = np.array(list(itertools.product([0, 1], repeat=3)))
        assert np.allclose(model.energy(states), [model.energy(s) for s in states])

    def test_rejects_self_loop(self):
        """Test that self-couplings are rejected."""
        with pytest.raises(SamplerError):
            EnergyModel([0.0, 0.0], [[1, 1]], [1.0])

    def test_rejects_coupling_count(self):
        """Test that couplings must align with edges."""
        with pytest.raises(SamplerError):
            EnergyModel([0.0, 0.0], [[0, 1]], [1.0, 2.0])

    def test_clamp_value_range(self):
        """Test that clamp values outside [0, 1] fail."""
        with pytest.raises(SamplerError):
            ClampSet({0: 1.5})

    def test_ising_map_is_exact(self):
        """Test E(s) = E_ising(2s - 1) + offset on every state."""
        rng = np.random.default_rng(4)
        g = graph_for_hidden(6)
        model = EnergyModel(rng.normal(size=6), g.edges, rng.normal(size=g.edge_count))
        h, J, offset = to_ising(model)
        for bits in itertools.product([0, 1], repeat=6):
            s = np.array(bits, dtype=float)
            sigma = 2 * s - 1
            ising = -h @ sigma - J @ (sigma[model.edges[:, 0]] * sigma[model.edges[:, 1]]) + offset
            assert model.energy(s) == pytest.approx(ising, abs=1e-12)


class TestExactDistribution:
    """Test cases for the enumeration oracle."""

    def test_probabilities_sum_to_one(self):
        """Test normalisation."""
        dist = exact_distribution(_small_model())
        assert dist.probabilities.sum() == pytest.approx(1.0)

    def test_probabilities_follow_boltzmann(self):
        """Test p(s) proportional to exp(-E(s))."""
        model = _small_model()
        dist = exact_distribution(model)
        a, b = [1, 0, 1], [0, 1, 1]
        ratio = dist.probability(a) / dist.probability(b)
        assert ratio == pytest.approx(np.exp(model.energy(b) - model.energy(a)))

    def test_clamped_distribution_is_conditional(self):
        """Test that clamping node 0 to 1 gives the conditional of the full distribution."""
        model = _small_model()
        full = exact_distribution(model)
        clamped = exact_distribution(model, ClampSet({0: 1.0}))
        conditional = np.array([full.probabilities[1 + 2 * c] for c in range(4)])
        assert np.allclose(clamped.probabilities, conditional / conditional.sum())
        assert clamped.free_nodes.tolist() == [1, 2]

    def test_too_many_free_nodes(self):
        """Test that enumeration refuses more than 24 free nodes."""
        g = graph_for_hidden(25)
        with pytest.raises(SamplerError):
            exact_distribution(EnergyModel(np.zeros(25), g.edges, np.zeros(g.edge_count)))


class TestChainSamplers:
    """Test cases for Gibbs and annealing samplers."""

    def setup_method(self):
        self.model = _small_model()
        self.dist = exact_distribution(self.model)

    # ==================== Gibbs ====================

    def test_gibbs_matches_oracle(self):
        """Test Gibbs total variation against enumeration."""
        batch = gibbs_sample(self.model, None, sweeps=100, chains=200, burn_in=20, seed=1)
        assert len(batch) == 20000
        assert total_variation(batch, self.dist) <= 0.03

    def test_gibbs_is_deterministic(self):
        """Test that the same seed reproduces the same states."""
        a = gibbs_sample(self.model, None, 5, 4, 2, seed=9)
        b = gibbs_sample(self.model, None, 5, 4, 2, seed=9)
        assert np.array_equal(a.states, b.states)

    def test_chain_independent_of_chain_count(self):
        """Test that chain 0 follows the same trajectory alone or among others."""
        alone = gibbs_sample(self.model, None, 10, 1, 5, seed=3)
        among = gibbs_sample(self.model, None, 10, 5, 5, seed=3)
        assert np.array_equal(alone.states, among.states[:10])

    def test_clamped_gibbs_holds_nothing_free(self):
        """Test that clamping every node is rejected."""
        clamps = ClampSet({0: 1.0, 1: 0.0, 2: 1.0})
        with pytest.raises(SamplerError):
            gibbs_sample(self.model, clamps, 5, 2, 0, seed=0)

    def test_clamped_gibbs_matches_conditional(self):
        """Test Gibbs with a clamp against the clamped oracle."""
        clamps = ClampSet({0: 1.0})
        batch = gibbs_sample(self.model, clamps, 100, 200, 20, seed=2)
        assert total_variation(batch, exact_distribution(self.model, clamps)) <= 0.03

    def test_energy_diagnostics(self):
        """Test that incremental energies were checked without drift."""
        batch = gibbs_sample(self.model, None, 400, 2, 0, seed=0)
        assert batch.diagnostics["energy_checks"] >= 1
        assert batch.diagnostics["max_energy_drift"] <= 1e-9

    def test_invalid_arguments(self):
        """Test that zero chains are rejected."""
        with pytest.raises(SamplerError):
            gibbs_sample(self.model, None, 10, 0, 0, seed=0)

    # ==================== Annealing ====================

    def test_single_rung_anneal_matches_oracle(self):
        """Test that a beta=1 single-rung anneal samples the Boltzmann distribution."""
        batch = anneal_sample(self.model, None, [1.0], reads=20000, seed=5, sweeps_per_rung=20)
        assert batch.source == "anneal"
        assert total_variation(batch, self.dist) <= 0.03

    def test_schedule_must_increase(self):
        """Test that a non-increasing ladder is rejected."""
        with pytest.raises(SamplerError):
            anneal_sample(self.model, None, [1.0, 0.5], reads=10, seed=0)

    def test_geometric_schedule(self):
        """Test the default ladder endpoints."""
        betas = geometric_schedule(0.1, 1.0, 20)
        assert betas[0] == pytest.approx(0.1) and betas[-1] == pytest.approx(1.0)
        assert np.all(np.diff(betas) > 0)

    def test_cold_anneal_finds_ground_state(self):
        """Test that a steep ladder ends mostly in the minimum-energy state."""
        batch = anneal_sample(self.model, None, geometric_schedule(0.1, 30.0, 60), reads=200, seed=0,
                              sweeps_per_rung=2)
        states = np.array(list(itertools.product([0, 1], repeat=3)))
        ground = states[np.argmin(self.model.energy(states))]
        codes, counts = np.unique(batch.state_indices(), return_counts=True)
        hits = np.mean(np.all(batch.states == ground, axis=1))
        assert codes[np.argmax(counts)] == int(ground @ [1, 2, 4])
        assert hits > 0.7

    # ==================== Batched samplers ====================

    def test_sample_fields_shape(self):
        """Test that the batched sampler returns reads * sweeps states per row."""
        sampler = GibbsSampler(sweeps=3, burn_in=2)
        out = sampler.sample_fields(np.zeros((4, 5)), np.zeros((5, 5)), reads=2, seed=0)
        assert out.shape == (4, 6, 5)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_anneal_sampler_one_state_per_read(self):
        """Test that the annealing sampler keeps only final states."""
        sampler = AnnealSampler([0.5, 1.0], sweeps_per_rung=2)
        out = sampler.sample_fields(np.zeros((3, 4)), np.zeros((4, 4)), reads=5, seed=0)
        assert out.shape == (3, 5, 4)

    def test_strong_fields_drive_states(self):
        """Test that large positive fields switch every unit on."""
        out = GibbsSampler().sample_fields(np.full((2, 3), 30.0), np.zeros((3, 3)), reads=4, seed=1)
        assert np.all(out == 1.0)

    def test_moments(self):
        """Test empirical moments on requested pairs."""
        batch = gibbs_sample(self.model, None, 50, 20, 5, seed=0)
        m = moments(batch, np.array([[0, 1]]))
        s = batch.states.astype(float)
        assert m.second[0] == pytest.approx(np.mean(s[:, 0] * s[:, 1]))
        assert np.allclose(m.first, s.mean(axis=0))

    def test_weighted_moments_are_expectations(self):
        """Test analytic moments against a sum over the enumerated states."""
        states = np.array([[(code >> j) & 1 for j in range(3)] for code in range(8)], dtype=np.float64)
        p = self.dist.probabilities
        m = weighted_moments(self.dist)
        assert np.allclose(m.first, p @ states, rtol=0, atol=1e-12)
        assert np.allclose(m.second, (states * p[:, None]).T @ states, rtol=0, atol=1e-12)
        assert np.allclose(np.diag(m.second), m.first, rtol=0, atol=1e-12)
        pairs = weighted_moments(self.dist, np.array([[0, 2]]))
        assert pairs.second[0] == pytest.approx(p @ (states[:, 0] * states[:, 2]), abs=1e-12)


class TestSamplerValidation:
    """Test cases for the oracle-equivalence check."""

    def test_random_model_is_seeded(self):
        """Test that random Chimera models replay from their seed."""
        a = random_chimera_model(6, 1.5, seed=3)
        b = random_chimera_model(6, 1.5, seed=3)
        assert np.array_equal(a.biases, b.biases) and np.array_equal(a.couplings, b.couplings)

    def test_validation_rows_and_dumps(self, tmp_path):
        """Test a small validation run end to end."""
        cfg = ValidationConfig(models=2, min_nodes=5, max_nodes=6, chains=500, sweeps=100, burn_in=20,
                               anneal_reads=50000, anneal_sweeps_per_rung=30, tolerance=0.05)
        rows = validate_samplers(cfg, seed=0, out_dir=tmp_path)

        assert len(rows) == 4
        assert {r["source"] for r in rows} == {"gibbs", "anneal"}
        assert all(r["passed"] for r in rows)
        assert all(r["marginal_error"] <= r["tv"] + 1e-12 for r in rows)
        assert (tmp_path / "model_00_gibbs.csv").exists()
        assert (tmp_path / "model_01_anneal.csv").exists()

    def test_min_above_max_rejected(self):
        """Test the node range validator."""
        with pytest.raises(ValueError):
            ValidationConfig(min_nodes=8, max_nodes=4)

    @pytest.mark.slow
    def test_default_validation_passes(self):
        """Test 20 random models at 10^5 samples per sampler within total variation 0.02."""
        cfg = ValidationConfig()
        assert cfg.models == 20 and cfg.tolerance == 0.02
        rows = validate_samplers(cfg, seed=0)
        assert len(rows) == 40
        assert all(r["samples"] >= 100000 for r in rows)
        assert all(r["passed"] for r in rows), [r for r in rows if not r["passed"]]
