"""Pure-numpy quadrature reductions: the fallback backend.

For each data row i with fixed part a0[i] = log tau_i + x_i'beta, sum the
kernel probability and its partials over the quadrature nodes:

    p[i]    = sum_k w_k P(exp(a0[i] + sigma z_k))
    deta[i] = sum_k w_k dP/da  (chain through a = a0 + sigma z)
    dsig[i] = sum_k w_k z_k dP/da
    dth[i]  = sum_k w_k dP/dtheta1   (beta-Poisson only)

Kind 0 = exponential, kind 1 = beta-Poisson. Works on the log-dose scale
throughout: for a = log D, P_exp = 1 - exp(-e^a) and dP/da = exp(a - e^a);
P_bp = 1 - exp(-theta1*softplus(a)) and dP/da = theta1*sigmoid(a)*
exp(-theta1*softplus(a)), dP/dtheta1 = softplus(a)*exp(-theta1*softplus(a)).
"""

import numpy as np

BACKEND_NAME = "numpy"


def _softplus(a):
    out = np.empty_like(a)
    pos = a > 0
    out[pos] = a[pos] + np.log1p(np.exp(-a[pos]))
    out[~pos] = np.log1p(np.exp(a[~pos]))
    return out


def reduce_terms(kind, a0, sigma, theta1, nodes, weights, want_grad=True):
    """Return (p, deta, dsig, dth); gradient arrays are None when
    want_grad is false, dth is None for the exponential kernel."""
    a = np.asarray(a0, dtype=float)[:, None] + sigma * np.asarray(nodes)[None, :]
    w = np.asarray(weights)
    z = np.asarray(nodes)
    if kind == 0:
        with np.errstate(over="ignore"):
            ea = np.exp(a)
            p = (-np.expm1(-ea)) @ w
            if not want_grad:
                return p, None, None, None
            d = np.exp(a - ea)  # exp(a)*exp(-exp(a)), safe: a - e^a -> -inf
        return p, d @ w, (d * z) @ w, None
    sp = _softplus(a)
    surv = np.exp(-theta1 * sp)
    p = (-np.expm1(-theta1 * sp)) @ w
    if not want_grad:
        return p, None, None, None
    sig = np.empty_like(a)
    pos = a > 0
    sig[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    sig[~pos] = np.exp(a[~pos] - sp[~pos])
    d = theta1 * sig * surv
    return p, d @ w, (d * z) @ w, (sp * surv) @ w
