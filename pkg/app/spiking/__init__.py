from .network import (
    SNNetwork,
    ScanSchedule,
    SpikeTrace,
    ActivityCounts,
    scan_charges,
    simulate,
    simulate_batch,
    total_activity,
    save_network,
    load_network,
    write_trace_csv,
)
from .detectors import (
    Detector,
    DetectorEnsemble,
    SNNEvoConfig,
    MutationRates,
    detector_score,
    ensemble_classify,
    ensemble_accuracy,
    evolve_snn,
    evolve_ensemble,
    random_network,
)

__all__ = [
    "SNNetwork", "ScanSchedule", "SpikeTrace", "ActivityCounts", "scan_charges",
    "simulate", "simulate_batch", "total_activity", "save_network", "load_network", "write_trace_csv",
    "Detector", "DetectorEnsemble", "SNNEvoConfig", "MutationRates", "detector_score",
    "ensemble_classify", "ensemble_accuracy", "evolve_snn", "evolve_ensemble", "random_network",
]
