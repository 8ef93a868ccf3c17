from .engine import (
    GeneSpec,
    Genome,
    Individual,
    EvoConfig,
    FitnessCache,
    init_population,
    evaluate,
    next_generation,
    evolve,
    target_fitness,
    write_generations_csv,
    write_evaluations_csv,
)
from .cnn import (
    LeNetHyper,
    CNNModel,
    FitConfig,
    BASELINE,
    GENE_SPECS,
    build,
    forward,
    train_and_score,
    gradient_check,
)

__all__ = [
    "GeneSpec", "Genome", "Individual", "EvoConfig", "FitnessCache",
    "init_population", "evaluate", "next_generation", "evolve", "target_fitness",
    "write_generations_csv", "write_evaluations_csv",
    "LeNetHyper", "CNNModel", "FitConfig", "BASELINE", "GENE_SPECS",
    "build", "forward", "train_and_score", "gradient_check",
]
