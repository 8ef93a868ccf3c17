from .accounting import (
    DeviceParams,
    PhaseEnergies,
    EnergyReport,
    account,
    power_from_energy,
    calibrate,
    load_profile,
    save_profile,
    reference_network,
    reference_stimulus,
    reference_profile,
)

__all__ = [
    "DeviceParams", "PhaseEnergies", "EnergyReport", "account", "power_from_energy", "calibrate",
    "load_profile", "save_profile", "reference_network", "reference_stimulus", "reference_profile",
]
