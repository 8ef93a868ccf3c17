"""
Reference RBM/LBM training series (6,000 training images, 200 hidden
units, 25 epochs, LBM couplings redrawn for the first three epochs).

Accuracies and reconstruction errors came from a different sampler and an
unstated error scale, so ``report`` compares trends against them, never
point values.
"""

from typing import Dict, List

from ..boltzmann.training import EpochMetrics

# epoch, rbm accuracy, lbm accuracy, rbm error, lbm error
_ROWS = (
    (1, 0.4530, 0.4566, 275881, 275102),
    (2, 0.7277, 0.7323, 170908, 170310),
    (3, 0.7730, 0.7913, 150911, 146101),
    (4, 0.8067, 0.8156, 139618, 132333),
    (5, 0.8162, 0.8348, 132283, 123162),
    (6, 0.8343, 0.8468, 125071, 116306),
    (7, 0.8582, 0.8548, 114485, 110730),
    (8, 0.8657, 0.8558, 109022, 106151),
    (9, 0.8687, 0.8553, 105516, 101437),
    (10, 0.8693, 0.8675, 102641, 93042),
    (11, 0.8705, 0.8723, 100452, 87908),
    (12, 0.8787, 0.8783, 98789, 84364),
    (13, 0.8778, 0.8780, 97368, 82016),
    (14, 0.8747, 0.8755, 95365, 80416),
    (15, 0.8755, 0.8771, 94178, 79220),
    (16, 0.8762, 0.8785, 93237, 77865),
    (17, 0.8748, 0.8781, 92147, 76708),
    (18, 0.8745, 0.8810, 91196, 75916),
    (19, 0.8743, 0.8806, 90312, 75275),
    (20, 0.8795, 0.8831, 89705, 74367),
    (21, 0.8823, 0.8820, 89213, 73643),
    (22, 0.8780, 0.8833, 88426, 72997),
    (23, 0.8720, 0.8838, 87679, 72396),
    (24, 0.8778, 0.8850, 87346, 71952),
    (25, 0.8755, 0.8853, 86850, 71168),
)

# Hardware energy pairs: per-image energy (J) and the matching average power (W).
ENERGY_PAIRS = {
    "total": (18.26e-9, 304.3e-3),
    "core": (5.24e-9, 87.43e-3),
}

# Full-scale CNN search budget and best accuracy; documentation targets only.
CNN_SEARCH = {"population": 500, "generations": 32, "evaluations": 16000, "best_accuracy": 0.985}


def reference_series() -> Dict[str, List[EpochMetrics]]:
    """{'rbm': [...], 'lbm': [...]} in the metrics-CSV row shape."""
    return {
        "rbm": [{"epoch": e, "accuracy": ra, "reconstruction_error": float(re)} for e, ra, _, re, _ in _ROWS],
        "lbm": [{"epoch": e, "accuracy": la, "reconstruction_error": float(le)} for e, _, la, _, le in _ROWS],
    }


def trend(series: List[EpochMetrics]) -> Dict[str, float]:
    """First/last accuracy and error, the quantities runs are compared on."""
    if not series:
        return {}
    first, last = series[0], series[-1]
    return {
        "first_accuracy": first["accuracy"],
        "last_accuracy": last["accuracy"],
        "first_error": first["reconstruction_error"],
        "last_error": last["reconstruction_error"],
    }
