"""Signal detection on aggregated lattice data."""

from ._efdrcs import (
    aggregate,
    combine,
    copula_rho,
    detect,
    dwt2,
    efdr_test,
    fisher_T,
    gamma_params,
    gamma_sf,
    gen_field,
    idwt2,
    mom_rho,
    standard_blocks,
)

__all__ = [
    "aggregate",
    "combine",
    "copula_rho",
    "detect",
    "dwt2",
    "efdr_test",
    "fisher_T",
    "gamma_params",
    "gamma_sf",
    "gen_field",
    "idwt2",
    "mom_rho",
    "standard_blocks",
]
