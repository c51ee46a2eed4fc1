"""
Norm bounds linking time-frequency and time-domain perturbations
"""

from src.theory.bounds import (
    BoundCheck, VectorSumCheck, bound_constant, alpha_prime, verify_bound,
    vector_sum_inequality_check, vector_sum_sweep, monte_carlo_bound,
)

__all__ = [
    'BoundCheck', 'VectorSumCheck', 'bound_constant', 'alpha_prime', 'verify_bound',
    'vector_sum_inequality_check', 'vector_sum_sweep', 'monte_carlo_bound',
]
