from .models import (
    RBMModel,
    LBMModel,
    BoltzmannModel,
    init_model,
    redraw_couplings,
    hidden_conditional,
    visible_conditional,
    as_energy_model,
    save_checkpoint,
    load_checkpoint,
)
from .training import (
    SamplerConfig,
    TrainConfig,
    EpochMetrics,
    make_sampler,
    cd_step,
    lbm_step,
    classify,
    accuracy,
    reconstruction_error,
    train,
    write_metrics_csv,
)

__all__ = [
    "RBMModel", "LBMModel", "BoltzmannModel", "init_model", "redraw_couplings",
    "hidden_conditional", "visible_conditional", "as_energy_model",
    "save_checkpoint", "load_checkpoint",
    "SamplerConfig", "TrainConfig", "EpochMetrics", "make_sampler",
    "cd_step", "lbm_step", "classify", "accuracy", "reconstruction_error",
    "train", "write_metrics_csv",
]
