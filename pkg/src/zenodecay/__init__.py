"""Exponential decay as the continuous limit of stochastic internal projective measurements.

Submodules
----------
operators     density operators, projectors, spectral decomposition, evolution
compound      per-step survival, instantaneous rate, compound survival product
stochastic    random subspace sequences and Monte Carlo survival ensembles
fitting       exponential and Lorentzian regressors (scikit-learn API)
golden_rule   discretized-continuum models, golden-rule rates, exact dynamics
experiments   named reproducible experiments; ``zenodecay`` command line
"""

__version__ = "0.1.0"

from .compound import (
    RateEstimate,
    SequencePlan,
    compound_survival,
    convergence_sweep,
    instantaneous_rate,
    per_step_survival,
    rate_finite_difference,
)
from .fitting import ExponentialDecayRegressor, LorentzianRegressor, fit_exponential, fit_lorentzian
from .golden_rule import (
    ChannelPartition,
    DiscretizedContinuumModel,
    build_model,
    channel_rates,
    exact_survival,
    fgr_rate,
    lineshape,
    lippmann_schwinger_solve,
    multi_channel_survival,
    short_time_coefficients,
)
from .operators import (
    DensityOperator,
    Projector,
    commutator,
    evolve,
    make_density_from_ket,
    make_projector,
    spectral_decompose,
    trace_prob,
)
from .stochastic import (
    InteriorEnsembleConfig,
    ensemble_survival,
    run_trajectory,
    sample_random_unitary,
    sample_step,
)
