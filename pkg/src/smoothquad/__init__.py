"""Basket option pricing by payoff smoothing and adaptive sparse grids.

The package prices European basket options under multivariate
Black-Scholes and Variance-Gamma dynamics.  Conditioning on all Gaussian
factors but one replaces the kinked payoff with a smooth Black-Scholes
integrand, which adaptive sparse-grid quadrature then integrates at
spectral rates; plain Monte Carlo and Sobol quasi-Monte Carlo are
provided for comparison and as unbiased baselines.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetExhausted,
    ConfigInvalid,
    OrderOutOfRange,
    OutOfDomain,
    SmoothQuadError,
)
from .linalg import best_binary_v, lambda1_sq, rank_one_reduce
from .models import (
    BlackScholesBasket,
    VarianceGammaBasket,
    effective_bs,
    effective_vg,
    random_instance,
    random_vg_instance,
    vg_base_matrix,
    vg_example,
)
from .pricing import (
    Integrand,
    bs_call,
    price_asg,
    price_cv,
    price_mc,
    price_qmc,
    price_vg_mc,
    price_vg_smoothed,
    raw_integrand,
    reference_price,
    smoothed_integrand,
    smoothed_integrand_v,
    vg_raw_integrand,
    vg_smoothed_integrand,
)
from .sampling import RngSpec, SobolStream, inv_norm_cdf

__all__ = [
    "BlackScholesBasket",
    "BudgetExhausted",
    "ConfigInvalid",
    "Integrand",
    "OrderOutOfRange",
    "OutOfDomain",
    "RngSpec",
    "SmoothQuadError",
    "SobolStream",
    "VarianceGammaBasket",
    "best_binary_v",
    "bs_call",
    "effective_bs",
    "effective_vg",
    "inv_norm_cdf",
    "lambda1_sq",
    "price_asg",
    "price_cv",
    "price_mc",
    "price_qmc",
    "price_vg_mc",
    "price_vg_smoothed",
    "random_instance",
    "random_vg_instance",
    "rank_one_reduce",
    "raw_integrand",
    "reference_price",
    "smoothed_integrand",
    "smoothed_integrand_v",
    "vg_base_matrix",
    "vg_example",
    "vg_raw_integrand",
    "vg_smoothed_integrand",
    "__version__",
]
