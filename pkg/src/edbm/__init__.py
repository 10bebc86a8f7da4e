"""Energy-based modelling on bit vectors with contrastive perturbation losses."""

from .bits import Dataset, all_states, load_dataset_csv, save_dataset_csv
from .config import ConfigError, config_digest, load_config, validate_config
from .gray import bits_to_float_batch, float_to_bits_batch
from .loss import (
    EnergyOverflowError,
    LossConfig,
    LossReport,
    contrastive_potential_exact,
    ed_exact,
    ed_exact_grad,
    ed_loss_batch,
)
from .metrics import (
    MetricRecord,
    MetricsLog,
    exact_log_partition,
    mmd_hamming,
    neg_log_rmse,
    nll_importance,
    tv_distance,
)
from .models import (
    EnergyModel,
    IsingEnergy,
    MlpEnergy,
    TabularEnergy,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .oracles import ORACLES, run_oracles
from .perturb import (
    Bernoulli,
    Directed,
    Grid,
    MeanPool,
    NeighbourGraph,
    perturb,
    sample_negatives,
    sample_negatives_batch,
    scheme_from_config,
    scheme_to_config,
)
from .rng import RngStream
from .samplers import (
    ChainState,
    PcdBuffer,
    generate_ising_dataset,
    gibbs_site_conditional,
    gibbs_sweep,
    gibbs_sweeps_batch,
    grid_adjacency,
    pcd_gradient,
)
from .synthetic import sample_synthetic
from .training import (
    AdamState,
    TrainResult,
    adam_step,
    run_density_recipe,
    run_ising_recipe,
    train_ed,
    train_pcd,
)

__version__ = "0.1.0"
