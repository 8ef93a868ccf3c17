"""
Tests for the spiking network simulator and the digit detectors
"""
import json

import numpy as np
import pytest

from app.core.errors import ConfigError, DataError
from app.core.seeding import make_rng
from app.data.mnist import Dataset
from app.spiking.detectors import (
    Detector, DetectorEnsemble, MutationRates, SNNEvoConfig, balanced_accuracy, best_cut, calibrate_detector,
    detection_task, detector_score, ensemble_accuracy, ensemble_classify, evolve_snn, load_detector,
    load_ensemble, mutate, output_counts, random_network, save_detector, save_ensemble,
)
from app.spiking.network import (
    ActivityCounts, ScanSchedule, SNNetwork, load_network, network_dict, save_network, scan_charges,
    simulate, simulate_batch, total_activity, write_trace_csv,
)

from .factories import synthetic_dataset

INPUTS = 28
OUTPUT = 28


def relay(weight=1.0, delay=1, threshold=1.0, source=0) -> SNNetwork:
    """28 inputs and one output; input ``source`` drives the output through a single synapse."""
    return SNNetwork(
        thresholds=np.full(INPUTS + 1, threshold),
        pre=np.array([source]),
        post=np.array([OUTPUT]),
        weight=np.array([weight]),
        delay=np.array([delay]),
        inputs=tuple(range(INPUTS)),
        output=OUTPUT,
    )


def dot_image(row: int, column: int, value: float = 1.0) -> np.ndarray:
    image = np.zeros((28, 28))
    image[row, column] = value
    return image.reshape(-1)


def with_synapse(net: SNNetwork, pre: int, post: int, weight: float, delay: int) -> SNNetwork:
    return SNNetwork(
        thresholds=net.thresholds,
        pre=np.append(net.pre, pre),
        post=np.append(net.post, post),
        weight=np.append(net.weight, weight),
        delay=np.append(net.delay, delay),
        inputs=net.inputs,
        output=net.output,
    )


def earliest_arrivals(net: SNNetwork, source: int) -> np.ndarray:
    """Shortest summed delay from ``source`` to every neuron (inf when unreachable)."""
    dist = np.full(net.neuron_count, np.inf)
    dist[source] = 0.0
    for _ in range(net.neuron_count):
        np.minimum.at(dist, net.post, dist[net.pre] + net.delay)
    return dist


class TestNetwork:
    """Test cases for network construction."""

    def test_counts(self):
        """Test neuron, synapse and delay-element counts."""
        net = relay(delay=3)
        assert net.neuron_count == 29
        assert net.synapse_count == 1
        assert net.delay_elements == 3
        assert net.role(0) == "input" and net.role(OUTPUT) == "output"

    @pytest.mark.parametrize("change", [
        {"delay": np.array([0])},
        {"post": np.array([29])},
        {"weight": np.array([np.inf])},
        {"thresholds": np.full(29, np.nan)},
        {"inputs": (0, 0)},
        {"output": 40},
    ])
    def test_invalid_networks(self, change):
        """Test that malformed networks are rejected."""
        args = dict(thresholds=np.ones(29), pre=np.array([0]), post=np.array([OUTPUT]), weight=np.array([1.0]),
                    delay=np.array([1]), inputs=tuple(range(INPUTS)), output=OUTPUT)
        args.update(change)
        with pytest.raises(ConfigError):
            SNNetwork(**args)

    def test_arrays_are_read_only(self):
        """Test that a network cannot be edited in place."""
        with pytest.raises(ValueError):
            relay().weight[0] = 5.0

    def test_file_round_trip(self, tmp_path):
        """Test that a saved network loads to the same structure."""
        net = random_network(make_rng(0), SNNEvoConfig(), hidden=6)
        save_network(net, tmp_path / "net.json")
        assert network_dict(load_network(tmp_path / "net.json")) == network_dict(net)

    def test_load_rejects_other_files(self, tmp_path):
        """Test the format check on load."""
        (tmp_path / "other.json").write_text(json.dumps({"format": "something else"}))
        with pytest.raises(DataError):
            load_network(tmp_path / "other.json")


class TestScan:
    """Test cases for turning images into input schedules."""

    def setup_method(self):
        self.image = (np.arange(784) / 784.0)[None]
        self.pixels = self.image.reshape(28, 28)

    def test_column_scan(self):
        """Test that step t feeds column t, input i taking row i."""
        charges = scan_charges(self.image, "columns")
        assert charges.shape == (1, 28, 28)
        assert charges[0, 5, 7] == self.pixels[7, 5]

    def test_row_scan(self):
        """Test that step t feeds row t, input i taking column i."""
        charges = scan_charges(self.image, "rows")
        assert charges[0, 5, 7] == self.pixels[5, 7]

    def test_unknown_direction(self):
        """Test that only rows and columns are accepted."""
        with pytest.raises(ConfigError):
            scan_charges(self.image, "diagonal")

    def test_schedule_range(self):
        """Test that charges outside [0, 1] are rejected."""
        with pytest.raises(DataError):
            ScanSchedule(np.full((28, 28), 2.0))


class TestSimulation:
    """Test cases for the integrate-and-fire simulation."""

    # ==================== Timing ====================

    @pytest.mark.parametrize("delay", [1, 3, 8])
    def test_spike_arrives_after_delay(self, delay):
        """Test that a spike fired at t reaches the output at t + delay."""
        trace, _ = simulate(relay(delay=delay), ScanSchedule.from_image(dot_image(0, 5)))
        assert trace.fire_times(0) == [5]
        assert trace.fire_times(OUTPUT) == [5 + delay]

    def test_sub_threshold_charge_accumulates(self):
        """Test that two half charges fire the neuron on the second."""
        image = dot_image(0, 2, 0.5) + dot_image(0, 9, 0.5)
        trace, _ = simulate(relay(), ScanSchedule.from_image(image))
        assert trace.fire_times(0) == [9]

    def test_leak(self):
        """Test that a leak keeps two separated half charges below threshold."""
        image = dot_image(0, 2, 0.5) + dot_image(0, 9, 0.5)
        trace, _ = simulate(relay(), ScanSchedule.from_image(image), leak=0.2)
        assert trace.fire_times(0) == []

    def test_inhibitory_synapse(self):
        """Test that a negative weight never fires the output."""
        trace, _ = simulate(relay(weight=-2.0), ScanSchedule.from_image(dot_image(0, 5)))
        assert trace.fire_times(OUTPUT) == []

    def test_inert_network(self):
        """Test that unreachable thresholds give no fires at all."""
        net = relay(threshold=np.inf)
        counts, activity = simulate_batch(net, scan_charges(synthetic_dataset(5).images))
        assert counts.sum() == 0
        assert all(a.fires == 0 and a.synapse_active == 0 for a in activity)

    def test_trace_csv(self, tmp_path):
        """Test the recorded event file."""
        trace, _ = simulate(relay(delay=2), ScanSchedule.from_image(dot_image(0, 5)))
        write_trace_csv(tmp_path / "trace.csv", trace)
        assert (tmp_path / "trace.csv").read_text().splitlines()[1:] == ["time,neuron", "5,0", "7,28"]

    # ==================== Batches ====================

    def test_batch_matches_single_runs(self):
        """Test that batched simulation equals image-by-image simulation."""
        net = random_network(make_rng(3), SNNEvoConfig(), hidden=12)
        images = synthetic_dataset(6).images
        counts, activity = simulate_batch(net, scan_charges(images))
        for b in range(len(images)):
            trace, single = simulate(net, ScanSchedule.from_image(images[b]))
            assert np.array_equal(trace.counts, counts[b])
            assert single == activity[b]

    def test_deterministic(self):
        """Test that identical inputs give identical traces."""
        net = random_network(make_rng(4), SNNEvoConfig(), hidden=10)
        schedule = ScanSchedule.from_image(synthetic_dataset(1).images[0])
        a, _ = simulate(net, schedule)
        b, _ = simulate(net, schedule)
        assert a.events == b.events

    # ==================== Causality ====================

    def test_extra_input_spike_only_adds_its_downstream_events(self):
        """Test that a second input spike at t=10 leaves earlier events alone and shows up after the delays."""
        net = SNNetwork(
            thresholds=np.ones(30),
            pre=np.array([0, 28]),
            post=np.array([28, 29]),
            weight=np.array([1.0, 1.0]),
            delay=np.array([3, 2]),
            inputs=tuple(range(INPUTS)),
            output=29,
        )
        base, _ = simulate(net, ScanSchedule.from_image(dot_image(0, 3)))
        moved, _ = simulate(net, ScanSchedule.from_image(dot_image(0, 3) + dot_image(0, 10)))
        assert base.events == [(3, 0), (6, 28), (8, 29)]
        assert [e for e in moved.events if e[0] < 10] == base.events
        assert set(moved.events) - set(base.events) == {(10, 0), (13, 28), (15, 29)}

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_change_cannot_outrun_synapse_delays(self, seed):
        """Test that flipping pixel (row 7, column 12) changes no neuron before 12 plus its delay distance."""
        net = random_network(make_rng(seed), SNNEvoConfig(), hidden=12)
        row, column = 7, 12
        image = synthetic_dataset(1).images[0].astype(np.float64).copy()
        pixels = image.reshape(28, 28)
        pixels[row, column] = 1.0 if pixels[row, column] < 0.5 else 0.0
        base, _ = simulate(net, ScanSchedule.from_image(synthetic_dataset(1).images[0]))
        moved, _ = simulate(net, ScanSchedule.from_image(image))
        dist = earliest_arrivals(net, net.inputs[row])
        for neuron in range(net.neuron_count):
            changed = set(base.fire_times(neuron)) ^ set(moved.fire_times(neuron))
            if changed:
                assert min(changed) >= column + dist[neuron]

    # ==================== Zero-weight synapses ====================

    @pytest.mark.parametrize("seed", [0, 1])
    def test_zero_weight_synapse_leaves_trace_unchanged(self, seed):
        """Test that adding or removing a zero-weight synapse gives the same events."""
        net = random_network(make_rng(seed), SNNEvoConfig(), hidden=10)
        padded = with_synapse(net, 3, net.output, 0.0, net.max_delay + 3)
        schedule = ScanSchedule.from_image(synthetic_dataset(1).images[0])
        trace, activity = simulate(net, schedule)
        padded_trace, padded_activity = simulate(padded, schedule)
        assert padded_trace.events == trace.events
        assert np.array_equal(padded_trace.counts, trace.counts)
        assert padded_activity.accumulates == activity.accumulates
        assert padded_activity.synapses == activity.synapses + 1

    def test_input_width_checked(self):
        """Test that a schedule must feed every input."""
        with pytest.raises(DataError):
            simulate_batch(relay(), np.zeros((1, 28, 10)))

    def test_horizon_covers_scan(self):
        """Test that the horizon cannot cut the scan short."""
        with pytest.raises(ConfigError):
            simulate_batch(relay(), np.zeros((1, 28, 28)), horizon=20)


class TestActivity:
    """Test cases for activity tallies."""

    def setup_method(self):
        net = random_network(make_rng(5), SNNEvoConfig(), hidden=15)
        _, self.activity = simulate_batch(net, scan_charges(synthetic_dataset(4).images))

    def test_slots_balance(self):
        """Test that active and idle slots cover every element and cycle."""
        for a in self.activity:
            a.validate()
            assert a.is_balanced()

    def test_total_sums_images(self):
        """Test that totals add counts and keep element counts."""
        total = total_activity(self.activity)
        assert total.images == 4
        assert total.fires == sum(a.fires for a in self.activity)
        assert total.neurons == self.activity[0].neurons
        assert total.is_balanced()

    def test_cannot_mix_networks(self):
        """Test that activity from different networks is not added."""
        _, other = simulate_batch(relay(), np.zeros((1, 28, 28)))
        with pytest.raises(DataError):
            self.activity[0] + other[0]

    @pytest.mark.parametrize("seed", [6, 7])
    def test_counts_agree_with_trace(self, seed):
        """Test fires against recorded events and accumulates against nonzero deliveries."""
        net = random_network(make_rng(seed), SNNEvoConfig(), hidden=12)
        net = with_synapse(net, 0, net.output, 0.0, 2)
        schedule = ScanSchedule.from_image(synthetic_dataset(1).images[0])
        trace, activity = simulate(net, schedule)
        assert activity.fires == len(trace.events)
        assert activity.output_fires == len(trace.fire_times(net.output))
        live = net.weight != 0
        expected = np.count_nonzero(schedule.charges)
        for t, neuron in trace.events:
            sel = live & (net.pre == neuron)
            expected += int(np.sum(t + net.delay[sel] < trace.horizon))
        assert activity.accumulates == expected

    def test_dict_round_trip(self):
        """Test conversion to and from plain dicts."""
        a = self.activity[0]
        assert ActivityCounts.from_dict(a.to_dict()) == a

    def test_negative_counts_rejected(self):
        """Test validation of hand-built counts."""
        with pytest.raises(DataError):
            ActivityCounts(fires=-1).validate()


class TestDetectorScoring:
    """Test cases for scoring, cuts and ensembles."""

    def test_balanced_accuracy(self):
        """Test the mean of true-positive and true-negative rates."""
        assert balanced_accuracy([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(5 / 6)
        assert balanced_accuracy([0, 0, 0, 0], [1, 1, 0, 0]) == 0.5

    def test_best_cut(self):
        """Test the cut that separates the two classes."""
        cut, acc = best_cut(np.array([0, 0, 3, 4]), np.array([False, False, True, True]))
        assert (cut, acc) == (3.0, 1.0)

    def test_calibrate_detector(self):
        """Test baseline, scale and cut learned from a relay on a dot task."""
        net = relay()
        images = np.stack([dot_image(0, 5)] * 4 + [dot_image(3, 5)] * 4)
        truth = np.array([True] * 4 + [False] * 4)
        det, acc = calibrate_detector(net, output_counts(net, images), truth)
        assert acc == 1.0
        assert det.baseline == 0.0 and det.cut == 1.0
        assert detector_score(det, dot_image(0, 5)) > detector_score(det, dot_image(3, 5))

    def test_row_zero_detector_counts_bright_pixels(self):
        """Test an input-relay-output detector that fires once per bright pixel in row 0."""
        net = SNNetwork(
            thresholds=np.array([0.5] * INPUTS + [1.0, 1.0]),
            pre=np.array([0, 28]),
            post=np.array([28, 29]),
            weight=np.array([1.0, 1.0]),
            delay=np.array([1, 1]),
            inputs=tuple(range(INPUTS)),
            output=29,
        )
        rng = make_rng(8)
        image = rng.random((28, 28))
        image[0] = np.where(rng.random(28) < 0.4, 0.8, 0.0)
        score = detector_score(Detector(net), image.reshape(-1))
        assert score == float(np.sum(image[0] > 0.5))
        assert score > 0

    def test_ensemble_needs_ten(self):
        """Test the ensemble size check."""
        with pytest.raises(ConfigError):
            DetectorEnsemble(tuple(Detector(relay()) for _ in range(9)))

    def test_ensemble_classify(self):
        """Test that the highest-scoring detector names the digit."""
        detectors = [Detector(relay(weight=1.0 if d == 3 else 0.0)) for d in range(10)]
        ens = DetectorEnsemble(tuple(detectors))
        assert ensemble_classify(ens, dot_image(0, 5)) == 3
        assert ensemble_classify(ens, np.zeros(784)) == 0

    def test_ensemble_accuracy(self):
        """Test accuracy over a labelled set."""
        detectors = [Detector(relay(source=d)) for d in range(10)]
        ens = DetectorEnsemble(tuple(detectors))
        ds = Dataset(np.stack([dot_image(d, 5) for d in range(10)]), np.arange(10))
        assert ensemble_accuracy(ens, ds) == 1.0


class TestStructuralEvolution:
    """Test cases for random networks, mutation and detector evolution."""

    def setup_method(self):
        self.cfg = SNNEvoConfig(population=20, generations=3, seed=0)

    def test_random_network_layout(self):
        """Test inputs first, output last and the requested sizes."""
        net = random_network(make_rng(0), self.cfg, hidden=5, synapses=20)
        assert net.neuron_count == 34
        assert net.synapse_count == 20
        assert net.inputs == tuple(range(28)) and net.output == 33
        assert not np.any(net.pre == net.post)

    def test_too_many_synapses(self):
        """Test that the synapse count must fit the neuron count."""
        with pytest.raises(ConfigError):
            random_network(make_rng(0), self.cfg, inputs=2, hidden=0, synapses=7)

    def test_mutation_keeps_network_valid(self):
        """Test that repeated mutation preserves the input/output layout."""
        rng = make_rng(1)
        net = random_network(rng, self.cfg)
        for _ in range(200):
            net = mutate(net, rng, self.cfg)
            assert net.inputs == tuple(range(28))
            assert net.output == net.neuron_count - 1

    def test_zero_rates_clone(self):
        """Test that mutation with all rates zero changes nothing."""
        cfg = self.cfg.model_copy(update={"rates": MutationRates.none()})
        net = random_network(make_rng(2), cfg)
        assert mutate(net, make_rng(3), cfg) is net

    def test_config_checks(self):
        """Test elites and hidden-size validation."""
        with pytest.raises(ValueError):
            SNNEvoConfig(population=2, elites=2)
        with pytest.raises(ValueError):
            SNNEvoConfig(hidden_min=10, hidden_max=5)

    def test_detection_task_is_balanced(self):
        """Test half positives and half negatives."""
        images, truth = detection_task(synthetic_dataset(300), digit=4, size=20, seed=0)
        assert images.shape == (20, 784)
        assert truth.sum() == 10

    def test_detection_task_needs_images(self):
        """Test that an oversized task is rejected."""
        with pytest.raises(DataError):
            detection_task(synthetic_dataset(50), digit=1, size=40, seed=0)

    def test_evolves_separable_task(self):
        """Test that bright versus blank images are separated perfectly."""
        images = np.concatenate([np.ones((5, 784)), np.zeros((5, 784))])
        truth = np.array([True] * 5 + [False] * 5)
        result = evolve_snn(images, truth, self.cfg)
        assert result.fitness == 1.0
        bests = [row["best_so_far"] for row in result.history]
        assert all(b >= a for a, b in zip(bests, bests[1:]))

    def test_evolution_is_deterministic(self):
        """Test that a seed replays the same detector."""
        images, truth = detection_task(synthetic_dataset(100), digit=2, size=10, seed=0)
        a = evolve_snn(images, truth, self.cfg)
        b = evolve_snn(images, truth, self.cfg.model_copy(update={"workers": 3}))
        assert a.fitness == b.fitness
        assert network_dict(a.detector.network) == network_dict(b.detector.network)

    def test_one_class_task_rejected(self):
        """Test that a task needs both classes."""
        with pytest.raises(DataError):
            evolve_snn(np.zeros((4, 784)), np.ones(4, dtype=bool), self.cfg)


class TestDetectorFiles:
    """Test cases for detector and ensemble files."""

    def test_detector_round_trip(self, tmp_path):
        """Test that calibration values survive saving."""
        det = Detector(relay(delay=2), baseline=0.5, scale=2.0, cut=3.0)
        save_detector(det, tmp_path / "d.json")
        loaded = load_detector(tmp_path / "d.json")
        assert (loaded.baseline, loaded.scale, loaded.cut) == (0.5, 2.0, 3.0)
        assert network_dict(loaded.network) == network_dict(det.network)

    def test_bare_network_as_detector(self, tmp_path):
        """Test that a plain network file loads with neutral calibration."""
        save_network(relay(), tmp_path / "net.json")
        det = load_detector(tmp_path / "net.json")
        assert (det.baseline, det.scale) == (0.0, 1.0)

    def test_ensemble_round_trip(self, tmp_path):
        """Test the ensemble manifest and its ten detector files."""
        ens = DetectorEnsemble(tuple(Detector(relay(source=d)) for d in range(10)))
        manifest = save_ensemble(ens, tmp_path / "ensemble")
        assert len(list((tmp_path / "ensemble").glob("detector_*.json"))) == 10
        loaded = load_ensemble(manifest)
        assert ensemble_classify(loaded, dot_image(7, 5)) == 7
