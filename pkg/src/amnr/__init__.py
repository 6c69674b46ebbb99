"""Nonparametric tensor regression via CP decomposition and GP priors,
with linear and flattened-GP baselines, synthetic generators, an SIR
epidemic pipeline, and an experiment harness."""

from .data import Dataset, load_atrd, save_atrd
from .datagen import DgpSpec, gen_full_rank, gen_low_rank, gen_sobolev, generate
from .epidemics import (
    EmailLog,
    Graph,
    SirConfig,
    build_epidemic_dataset,
    ingest_email_log,
    sir_simulate,
)
from .errors import ConfigurationError, IllConditionedError, NormalizationError, ShapeError
from .estimator import (
    AmnrConfig,
    AmnrModel,
    amnr_eval,
    fit,
    load_model,
    posterior_mean_insample,
    predict,
    recommend_m,
    save_model,
)
from .gp import GpRegressor, MvnSampler, gp_fit_predict
from .baselines import (
    TgpModel,
    TlrModel,
    tgp_fit,
    tgp_fit_predict,
    tlr_fit,
    tlr_inner_factored,
    tlr_predict,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    SlopeResult,
    emit,
    load_table,
    run_experiment,
    slope_analysis,
)
from .kernels import GramMatrix, JitterPolicy, KernelSpec, bandwidth_grid, gram, kernel_eval
from .tensor import (
    CpForm,
    Tensor,
    canonicalize,
    cp_als,
    inner,
    make_cp,
    random_sign_flip,
    rank_one,
    reconstruct,
)

__version__ = "0.1.0"
