"""vnnkit: sparsify ReLU networks into verification-friendly ones and
certify L-infinity robustness of both."""

from .datasets import Dataset, LabeledSample, load_csv, load_mnist, save_csv, synth_blobs
from .errors import (
    ConfigError,
    DataFormatError,
    InputShapeError,
    InternalConsistencyError,
    ModelFormatError,
    NetworkValidationError,
    SolverStalledError,
    TrainingDivergedError,
    VnnkitError,
)
from .lp import LinearProgram, LpSolution, check_feasible, solve
from .model_io import load, save
from .network import (
    Layer,
    Network,
    activation_pattern,
    count_nonzeros,
    forward,
    forward_batch,
    l1_mass,
    margin,
    predict,
)
from .oracle import OracleLimits, OracleResult, attack, exact_verify
from .pruning import mbp_prune, mbp_prune_to_sparsity
from .sparsify import (
    LayerSolution,
    SparsifyConfig,
    SparsifyReport,
    build_layer_lp,
    sparsify_layer,
    sparsify_network,
)
from .training import train_fixture
from .verify import (
    AbstractElement,
    RobustnessProperty,
    VerificationResult,
    interval_bounds,
    polyhedral_bounds,
    verify_robustness,
)

__version__ = "0.1.0"
