"""Dose-response kernels P(D) and their partial derivatives.

Two kernels, both with the redundant scale parameter fixed to 1:
exponential P(D) = 1 - exp(-D) and beta-Poisson P(D) = 1 - (1 + D)^(-theta_1).
Stable forms use expm1/log1p so small doses do not cancel.
"""

import numpy as np

from .data import Kernel


def _check(spec, theta1, dose):
    dose = np.asarray(dose, dtype=float)
    if np.any(dose < 0):
        raise ValueError("negative dose")
    if spec.kernel is Kernel.BETA_POISSON:
        if theta1 is None or theta1 <= 0:
            raise ValueError("beta-Poisson kernel requires theta1 > 0")
    elif theta1 is not None:
        raise ValueError("exponential kernel takes no free parameter")
    return dose


def response_prob(spec, theta1, dose):
    """Infection probability at expected dose `dose`. Scalar in, scalar out;
    arrays broadcast."""
    dose = _check(spec, theta1, dose)
    if spec.kernel is Kernel.EXPONENTIAL:
        out = -np.expm1(-dose)
    else:
        out = -np.expm1(-theta1 * np.log1p(dose))
    return out if out.ndim else float(out)


def response_prob_partials(spec, theta1, dose):
    """(dP/dD, dP/dtheta1 or None) at `dose`."""
    dose = _check(spec, theta1, dose)
    if spec.kernel is Kernel.EXPONENTIAL:
        dpd = np.exp(-dose)
        return (dpd if dpd.ndim else float(dpd)), None
    # P = 1 - exp(-theta1*log1p(D))
    lp = np.log1p(dose)
    surv = np.exp(-theta1 * lp)  # (1+D)^(-theta1)
    dpd = theta1 * surv / (1.0 + dose)
    dpt = lp * surv
    if dpd.ndim:
        return dpd, dpt
    return float(dpd), float(dpt)
