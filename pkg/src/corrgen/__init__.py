"""Random correlation matrices through gamma = vecl(log C)."""
from .errors import (
    BoundExceeded,
    CorrgenError,
    DimensionError,
    DomainError,
    InvalidState,
    IterationLimit,
    NotPositiveDefinite,
    NumericalFailure,
    SamplingStarvation,
    ValidityStarvation,
)
from .gamma_map import (
    corr_to_gamma,
    density_corr,
    gamma_to_corr,
    is_irreducible,
    jacobian,
    min_eig_bounds,
    psi,
    validate_corr,
)
from .linalg import mat_exp_sym, mat_log_spd, sym_eig, unvecl, vecl
from .samplers import (
    EquiLaw,
    ExchangeableLaw,
    GaussianFull,
    GaussianIID,
    law_from_dict,
    sample_equicorrelation,
    sample_gamma,
)
from .block import BlockLaw, BlockSpec, MixtureSpec, block_corr, sample_block_corr, sample_mixture, solve_block_diagonal

__version__ = "0.1.0"
