"""
Tests for the evolution engine and the evolved LeNet-style CNN
"""
import math
import os

import numpy as np
import pytest

from app.core.errors import ArchitectureError, ConfigError, DataError
from app.core.seeding import make_rng
from app.evolution.cnn import (
    BASELINE, GENE_SPECS, FitConfig, LeNetHyper, build, fit, forward, gradient_check, load_model, loss_and_grads,
    predict, save_model, score, train_and_score, write_fit_csv,
)
from app.evolution.engine import (
    EvoConfig, FitnessCache, GeneSpec, Individual, evaluate, evolve, fitness_seed, init_population,
    latest_snapshot, next_generation, rank, read_evaluations_csv, target_fitness, validate_genome,
    write_evaluations_csv, write_generations_csv,
)
from app.experiments.config import DataConfig
from app.services.data_service import DataService

from .factories import synthetic_dataset

SPECS = tuple(GeneSpec(f"g{i}", 0, 31) for i in range(5))
TARGET = (3, 17, 29, 0, 12)


class TestGenes:
    """Test cases for gene ranges and genome validation."""

    def test_bad_range(self):
        """Test that lo > hi is rejected."""
        with pytest.raises(ConfigError):
            GeneSpec("x", 5, 1)

    def test_validate_genome(self):
        """Test range and length checks."""
        assert validate_genome([1, 2, 3, 4, 5], SPECS) == (1, 2, 3, 4, 5)
        with pytest.raises(ConfigError):
            validate_genome([1, 2, 3, 4, 32], SPECS)
        with pytest.raises(ConfigError):
            validate_genome([1, 2], SPECS)

    def test_elites_below_population(self):
        """Test that elites must leave room for offspring."""
        with pytest.raises(ValueError):
            EvoConfig(population=4, elites=4)

    def test_default_mutation_rate(self):
        """Test the 1/genes default."""
        assert EvoConfig().mutation_rate(5) == pytest.approx(0.2)
        assert EvoConfig(mutation=0.5).mutation_rate(5) == 0.5


class TestOperators:
    """Test cases for initialisation, evaluation and breeding."""

    def setup_method(self):
        self.cfg = EvoConfig(population=20, generations=3, seed=11)
        self.fitness = target_fitness(TARGET)

    def test_init_population_is_valid_and_seeded(self):
        """Test that initial genomes are in range and replay from the seed."""
        a = init_population(SPECS, self.cfg)
        b = init_population(SPECS, self.cfg)
        assert [i.genome for i in a] == [i.genome for i in b]
        assert all(validate_genome(i.genome, SPECS) for i in a)
        assert len(a) == 20

    def test_evaluate_matches_direct_computation(self):
        """Test that evaluated fitness equals -sum((g - t)^2)."""
        population = evaluate(init_population(SPECS, self.cfg), self.fitness)
        for ind in population:
            assert ind.fitness == -sum((g - t) ** 2 for g, t in zip(ind.genome, TARGET))

    def test_evaluate_independent_of_workers(self):
        """Test that threads do not change results or their order."""
        population = init_population(SPECS, self.cfg)
        serial = evaluate(population, self.fitness, workers=1)
        threaded = evaluate(population, self.fitness, workers=4)
        assert [i.fitness for i in serial] == [i.fitness for i in threaded]

    def test_cache_evaluates_each_genome_once(self):
        """Test that duplicates and repeated calls hit the cache."""
        calls = []

        def counting(genome, seed):
            calls.append(genome)
            return 1.0

        population = [Individual((1, 1, 1, 1, 1)), Individual((1, 1, 1, 1, 1)), Individual((2, 2, 2, 2, 2))]
        cache = FitnessCache()
        evaluate(population, counting, cache=cache)
        evaluate(population, counting, cache=cache)
        assert len(calls) == 2
        assert len(cache.records) == 2

    def test_fitness_receives_derived_seed(self):
        """Test that each genome gets the seed derived from the run seed and genome."""
        seen = {}

        def recording(genome, seed):
            seen[genome] = seed
            return 0.0

        evaluate([Individual((4, 4, 4, 4, 4))], recording, seed=7)
        assert seen[(4, 4, 4, 4, 4)] == fitness_seed(7, (4, 4, 4, 4, 4))

    def test_failures_become_worst_fitness(self):
        """Test that exceptions and NaN are logged as -inf with a diagnostic."""
        def flaky(genome, seed):
            if genome[0] == 0:
                raise RuntimeError("boom")
            return float("nan") if genome[0] == 1 else 1.0

        population = evaluate([Individual((0,) * 5), Individual((1,) * 5), Individual((2,) * 5)], flaky)
        assert population[0].fitness == -math.inf and "boom" in population[0].diagnostic
        assert population[1].fitness == -math.inf and "NaN" in population[1].diagnostic
        assert population[2].fitness == 1.0

    def test_rank_is_stable(self):
        """Test best-first ordering with ties kept in population order."""
        population = [Individual((i,) * 5, f) for i, f in enumerate([1.0, 3.0, 3.0, 2.0])]
        assert [i.genome[0] for i in rank(population)] == [1, 2, 3, 0]

    def test_rank_needs_fitness(self):
        """Test that unevaluated individuals cannot be ranked."""
        with pytest.raises(DataError):
            rank([Individual((1,) * 5)])

    @pytest.mark.parametrize("selection", ["truncation", "tournament"])
    def test_next_generation(self, selection):
        """Test elitism, population size and gene ranges of offspring."""
        cfg = self.cfg.model_copy(update={"selection": selection, "elites": 2})
        population = evaluate(init_population(SPECS, cfg), self.fitness)
        children = next_generation(population, SPECS, cfg, make_rng(0))
        best = rank(population)
        assert len(children) == cfg.population
        assert children[0].genome == best[0].genome and children[1].genome == best[1].genome
        assert all(validate_genome(c.genome, SPECS) for c in children)


class TestEvolve:
    """Test cases for the generational driver."""

    def test_best_so_far_never_decreases(self):
        """Test elitism over a full run."""
        cfg = EvoConfig(population=20, generations=10, seed=1)
        result = evolve(SPECS, target_fitness(TARGET), cfg)
        bests = [row["best"] for row in result.history]
        assert all(b >= a for a, b in zip(bests, bests[1:]))
        assert result.best.fitness == max(bests)

    def test_synthetic_task_reaches_optimum(self):
        """Test that the known-optimum task is solved for at least 9 of 10 seeds."""
        solved = 0
        for seed in range(10):
            result = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=50, generations=50, seed=seed))
            solved += result.best.fitness == 0.0
        assert solved >= 9

    def test_run_is_deterministic_across_workers(self):
        """Test that the worker count does not change the history."""
        a = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=16, generations=5, seed=3, workers=1))
        b = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=16, generations=5, seed=3, workers=3))
        assert a.history == b.history
        assert a.evaluations == b.evaluations

    def test_evaluation_count(self):
        """Test that only fresh genomes are counted as evaluations."""
        result = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=10, generations=4, seed=0))
        assert result.fresh_evaluations == len(result.evaluations)
        assert result.fresh_evaluations <= 40
        assert len({g for g, _ in result.evaluations}) == len(result.evaluations)

    def test_callback_and_snapshots(self, tmp_path):
        """Test per-generation callbacks and snapshot files."""
        seen = []
        cfg = EvoConfig(population=8, generations=3, seed=2)
        evolve(SPECS, target_fitness(TARGET), cfg, snapshot_dir=tmp_path, on_generation=seen.append)
        assert [row["generation"] for row in seen] == [0, 1, 2]
        assert latest_snapshot(tmp_path).name == "generation_0002.json"

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        """Test that resuming from a snapshot reproduces the full run."""
        full = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=8, generations=6, seed=5))
        evolve(SPECS, target_fitness(TARGET), EvoConfig(population=8, generations=3, seed=5), snapshot_dir=tmp_path)
        resumed = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=8, generations=6, seed=5),
                         snapshot_dir=tmp_path)
        assert resumed.history == full.history
        assert resumed.best.genome == full.best.genome

    def test_output_files(self, tmp_path):
        """Test the generations and evaluations CSV files."""
        result = evolve(SPECS, target_fitness(TARGET), EvoConfig(population=6, generations=2, seed=0))
        write_generations_csv(tmp_path / "generations.csv", result.history)
        write_evaluations_csv(tmp_path / "evaluations.csv", SPECS, result.evaluations)

        lines = (tmp_path / "generations.csv").read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "generation,best,mean,std,best_genome"
        assert len(lines) == 4
        names, genomes, fitness = read_evaluations_csv(tmp_path / "evaluations.csv")
        assert names == [s.name for s in SPECS]
        assert genomes.shape == (len(result.evaluations), 5)
        assert fitness.tolist() == [f for _, f in result.evaluations]


class TestLeNet:
    """Test cases for the LeNet-style network."""

    # ==================== Architecture ====================

    def test_baseline_shapes(self):
        """Test the conventional 5-20-5-50-500 network."""
        shapes = BASELINE.shapes()
        assert shapes == {"conv1": 24, "pool1": 12, "conv2": 8, "pool2": 4, "flat": 800}

    @pytest.mark.parametrize("genome,stage", [
        ((14, 4, 14, 4, 16), "conv2"),
        ((14, 4, 7, 4, 16), "pool2"),
    ])
    def test_invalid_architecture_names_stage(self, genome, stage):
        """Test that an underflowing stage is reported by name."""
        with pytest.raises(ArchitectureError) as info:
            LeNetHyper.from_genome(genome).shapes()
        assert info.value.stage == stage

    def test_invalid_architecture_scores_zero(self):
        """Test that a genome with no valid network gets fitness 0."""
        data = (synthetic_dataset(20), synthetic_dataset(10, seed=1))
        assert train_and_score(LeNetHyper(14, 4, 14, 4, 16), FitConfig(epochs=1), data) == 0.0

    def test_gene_ranges(self):
        """Test the searched hyperparameter ranges."""
        assert [(s.lo, s.hi) for s in GENE_SPECS] == [(1, 14), (2, 64), (1, 14), (2, 64), (16, 512)]
        assert validate_genome(BASELINE.genome(), GENE_SPECS) == (5, 20, 5, 50, 500)

    # ==================== Forward and backward ====================

    def test_forward_is_a_distribution(self):
        """Test that outputs are class probabilities."""
        model = build(LeNetHyper(3, 2, 3, 3, 8), seed=0)
        probs = forward(model, synthetic_dataset(4).images)
        assert probs.shape == (4, 10)
        assert np.allclose(probs.sum(axis=1), 1.0)

    def test_gradient_check(self):
        """Test analytic gradients against central differences on a tiny variant."""
        ds = synthetic_dataset(3)
        model = build(LeNetHyper(3, 2, 3, 3, 8), seed=1)
        assert gradient_check(model, ds.images, ds.labels, samples=200, seed=0) <= 1e-4

    def test_gradient_check_dense_layer(self):
        """Test the output layer, which has no kinks, to a tight bound."""
        ds = synthetic_dataset(3)
        model = build(LeNetHyper(3, 2, 3, 3, 8), seed=2)
        assert gradient_check(model, ds.images, ds.labels, samples=50, layers=["W4", "b4"]) <= 1e-6

    def test_gradient_check_leaves_parameters(self):
        """Test that the check restores every perturbed parameter."""
        ds = synthetic_dataset(2)
        model = build(LeNetHyper(3, 2, 3, 3, 8), seed=1)
        before = model.copy()
        gradient_check(model, ds.images, ds.labels, samples=20)
        assert all(np.array_equal(model.params[k], before.params[k]) for k in model.params)

    def test_loss_decreases_along_gradient(self):
        """Test one small step against the gradient."""
        ds = synthetic_dataset(8)
        model = build(LeNetHyper(5, 4, 5, 4, 16), seed=0)
        loss, grads = loss_and_grads(model, ds.images, ds.labels)
        for name in grads:
            model.params[name] -= 1e-3 * grads[name]
        assert loss_and_grads(model, ds.images, ds.labels)[0] < loss

    # ==================== Training ====================

    def test_fit_learns_synthetic_digits(self):
        """Test that SGD separates the synthetic digit bands."""
        ds_train, ds_eval = synthetic_dataset(300, seed=1), synthetic_dataset(100, seed=2)
        model = build(LeNetHyper(5, 4, 5, 8, 32), seed=0)
        model, history = fit(model, ds_train, FitConfig(epochs=3, learning_rate=0.05), ds_eval)
        assert len(history) == 3
        assert score(model, ds_eval) > 0.8

    def test_baseline_memorises_fifty_images(self):
        """Test that 500 SGD steps (batch 10, lr 0.05) drive the baseline's loss on 50 images below 0.01."""
        ds = synthetic_dataset(50, seed=3)
        model = build(BASELINE, seed=0)
        cfg = FitConfig(epochs=100, learning_rate=0.05, batch_size=10)
        model, history = fit(model, ds, cfg)
        assert len(history) * math.ceil(len(ds) / cfg.batch_size) == 500
        assert loss_and_grads(model, ds.images, ds.labels)[0] < 0.01
        assert score(model, ds) == 1.0

    def test_train_and_score_is_seeded(self):
        """Test that the same config seed gives the same accuracy."""
        data = (synthetic_dataset(60, seed=1), synthetic_dataset(30, seed=2))
        cfg = FitConfig(epochs=1, seed=9)
        h = LeNetHyper(5, 2, 5, 2, 16)
        assert train_and_score(h, cfg, data) == train_and_score(h, cfg, data)

    def test_model_file(self, tmp_path):
        """Test that a saved model predicts identically after loading."""
        ds = synthetic_dataset(5)
        model = build(LeNetHyper(3, 2, 3, 3, 8), seed=0)
        save_model(model, tmp_path / "model.json")
        loaded = load_model(tmp_path / "model.json")
        assert loaded.hyper == model.hyper
        assert np.array_equal(predict(loaded, ds.images), predict(model, ds.images))

    def test_fit_csv(self, tmp_path):
        """Test the per-epoch fit history file."""
        write_fit_csv(tmp_path / "fit.csv", [{"epoch": 1, "loss": 0.5, "accuracy": 0.75}])
        assert (tmp_path / "fit.csv").read_text().splitlines()[1:] == ["epoch,loss,accuracy", "1,0.500000,0.750000"]


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("MNIST_DIR"), reason="needs MNIST_DIR")
class TestDeskScaleSearch:
    """Acceptance-scale CNN search on real MNIST."""

    def test_search_beats_baseline(self):
        """Test that a 16 x 8 search reaches 0.92 and matches the baseline."""
        data = DataService(DataConfig(dir=os.environ["MNIST_DIR"]), seed=0).train_eval(2000, 1000)
        cfg = FitConfig()

        def fitness(genome, seed):
            return train_and_score(LeNetHyper.from_genome(genome), cfg.model_copy(update={"seed": seed}), data)

        evo = EvoConfig(population=16, generations=8, seed=0)
        result = evolve(GENE_SPECS, fitness, evo)
        baseline = fitness(BASELINE.genome(), fitness_seed(evo.seed, BASELINE.genome()))
        assert result.best.fitness >= 0.92
        assert result.best.fitness >= baseline
