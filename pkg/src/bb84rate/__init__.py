"""Second-order key rates, Toeplitz hashing and protocol simulation for asymmetric-basis BB84."""

from .mathcore import (
    binary_entropy,
    binary_entropy_derivative,
    coef_a,
    coef_b,
    delta,
    gaussian_upper_tail,
    gaussian_upper_tail_inverse,
)
from .rate_engine import (
    KeyLengthReport,
    RateParams,
    Ratios,
    averaged_key_length,
    finite_key_length,
    max_key_length,
    numeric_optimize,
    optimal_ratios,
    rate_curve,
)

__version__ = "0.1.0"
