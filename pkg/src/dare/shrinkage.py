"""Multi-pathogen posterior shrinkage.

Per-pathogen Laplace fits are stacked into one joint Gaussian on the natural
parameter scale eta = (beta_1..beta_J, theta_1 if present, sigma^2) per
pathogen. A linear subspace span(L) encodes which coefficients are shrunk
towards a shared value across pathogens; exponentially tilting the Gaussian
by exp(-(nu/2) eta'(I-P)eta) with P the projection onto span(L) pulls the
posterior towards the subspace without imposing equality:

    Omega~ = Omega + nu (I - P),    m~ = Omega~^{-1} Omega m.

nu is selected by maximizing a Laplace-approximate Bayes factor comparing
the tilted model against the untilted one:

    score(nu) = log E_posterior[tilt_nu] - log E_prior[tilt_nu],

both expectations closed-form Gaussian integrals. The posterior term alone
is monotone decreasing in nu (the tilt only ever down-weights), so it cannot
select anything but 0; normalizing by the prior's own loss of mass makes the
score reward concentration near the subspace relative to what the prior
already had. The prior covariance enters only through the coordinates the
tilt touches (the shrunk betas, whose priors are exactly Gaussian); a grid
containing nu=0 lets the method decline to shrink.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import ndtr, ndtri

from .inference import SummaryRow


@dataclass(frozen=True)
class ShrinkagePlan:
    K: int  # pathogen count
    J: int  # covariate count (incl. intercept)
    n_dr: int  # free dose-response parameter count (0 or 1)
    shrink_sets: tuple  # S_j subsets of {1..K}, j = 1..J; S_1 must be empty
    pathogen_labels: tuple

    def __post_init__(self):
        if self.K < 1 or self.J < 1 or self.n_dr not in (0, 1):
            raise ValueError("bad plan dimensions")
        if len(self.pathogen_labels) != self.K or len(set(self.pathogen_labels)) != self.K:
            raise ValueError("pathogen_labels must be %d unique labels" % self.K)
        if len(self.shrink_sets) != self.J:
            raise ValueError("need one shrink set per covariate")
        sets = tuple(frozenset(int(k) for k in s) for s in self.shrink_sets)
        if sets[0]:
            raise ValueError("intercepts are never shrunk (S_1 must be empty)")
        for j, s in enumerate(sets, start=1):
            if s and not s <= set(range(1, self.K + 1)):
                raise ValueError("S_%d contains unknown pathogen indices" % j)
            if len(s) == 1:
                raise ValueError("S_%d has a single pathogen; shrinkage needs at least two" % j)
        object.__setattr__(self, "shrink_sets", sets)

    @property
    def j_prime(self):
        return self.J + self.n_dr + 1

    @property
    def q(self):
        return self.K * self.j_prime


@dataclass(frozen=True)
class JointFit:
    eta_mode: np.ndarray  # length Q
    eta_precision: np.ndarray  # Q x Q, block diagonal with K blocks of size J'
    layout: tuple  # per-coordinate labels "pathogen:param"
    prior_var: np.ndarray  # prior variance per eta coordinate (for nu selection)


def _gamma_sq_variance(shape, rate):
    # variance of sigma^2 when sigma ~ gamma(shape, rate)
    e2 = shape * (shape + 1) / rate**2
    e4 = shape * (shape + 1) * (shape + 2) * (shape + 3) / rate**4
    return e4 - e2**2


def stack_fits(fits, plan):
    """Assemble per-pathogen fits into the joint eta-scale Gaussian.

    Modes map (beta, log theta1, log sigma) -> (beta, theta1, sigma^2); the
    precision transforms by the diagonal Jacobian of the inverse map.
    """
    if len(fits) != plan.K:
        raise ValueError("expected %d fits, got %d" % (plan.K, len(fits)))
    kernels = {f.model_meta["kernel"] for f in fits}
    if len(kernels) != 1:
        raise ValueError("fits mix kernels: %s" % sorted(kernels))
    if kernels.pop() == "cloglog-glm":
        raise ValueError("joint shrinkage needs marginal-model fits, not the GLM")
    covs = {tuple(f.model_meta["covariates"]) for f in fits}
    if len(covs) != 1:
        raise ValueError("fits have mismatched covariate labels")
    covariates = covs.pop()
    if len(covariates) != plan.J:
        raise ValueError("plan J=%d but fits have %d covariates" % (plan.J, len(covariates)))
    for f, lab in zip(fits, plan.pathogen_labels):
        if not f.converged:
            raise ValueError("fit for pathogen %r did not converge" % lab)
        has_theta1 = "log_theta1" in f.param_labels
        if int(has_theta1) != plan.n_dr:
            raise ValueError("plan n_dr=%d does not match fit parameters" % plan.n_dr)

    jp = plan.j_prime
    Q = plan.q
    mode = np.zeros(Q)
    prec = np.zeros((Q, Q))
    pvar = np.zeros(Q)
    layout = []
    for k, (fit, lab) in enumerate(zip(fits, plan.pathogen_labels)):
        u = fit.mode
        J = plan.J
        # natural-scale block and diagonal Jacobian d(eta)/d(u)
        eta = np.empty(jp)
        d = np.ones(jp)
        eta[:J] = u[:J]
        pr = fit.model_meta["priors"]
        pvar_blk = np.empty(jp)
        pvar_blk[:J] = np.asarray(pr["beta_sd"], dtype=float) ** 2
        pos = J
        if plan.n_dr == 1:
            theta1 = np.exp(u[pos])
            eta[pos] = theta1
            d[pos] = theta1
            pvar_blk[pos] = float(pr["theta1_mean"]) ** 2
            pos += 1
        sigma = np.exp(u[pos])
        eta[pos] = sigma**2
        d[pos] = 2 * sigma**2
        pvar_blk[pos] = _gamma_sq_variance(float(pr["sigma_shape"]), float(pr["sigma_rate"]))

        sl = slice(k * jp, (k + 1) * jp)
        mode[sl] = eta
        prec[sl, sl] = fit.precision / np.outer(d, d)
        pvar[sl] = pvar_blk
        layout.extend("%s:%s" % (lab, c) for c in covariates)
        if plan.n_dr == 1:
            layout.append("%s:theta1" % lab)
        layout.append("%s:sigma2" % lab)
    return JointFit(eta_mode=mode, eta_precision=prec, layout=tuple(layout),
                    prior_var=pvar)


def build_L(plan):
    """The Q x C subspace basis: identity selectors for every unshrunk
    coordinate plus one shared 0/1 column per non-empty shrink set."""
    jp = plan.j_prime
    Q = plan.q
    cols = []

    def identity_cols(j, pathogens):
        for k in sorted(pathogens):
            c = np.zeros(Q)
            c[(k - 1) * jp + (j - 1)] = 1.0
            cols.append(c)

    all_k = range(1, plan.K + 1)
    identity_cols(1, all_k)
    for j in range(2, plan.J + 1):
        s = plan.shrink_sets[j - 1]
        identity_cols(j, sorted(set(all_k) - s))
        if s:
            shared = np.zeros(Q)
            for k in sorted(s):
                shared[(k - 1) * jp + (j - 1)] = 1.0
            cols.append(shared)
    for j in range(plan.J + 1, jp + 1):
        identity_cols(j, all_k)
    return np.column_stack(cols)


def projection(L):
    """P = L (L'L)^{-1} L'."""
    L = np.asarray(L, dtype=float)
    # potrf can sneak past an exactly singular Gram matrix on a roundoff pivot
    if np.linalg.matrix_rank(L) < L.shape[1]:
        raise ValueError("L is rank-deficient")
    try:
        g = cho_factor(L.T @ L)
    except LinAlgError:
        raise ValueError("L is rank-deficient")
    P = L @ cho_solve(g, L.T)
    return 0.5 * (P + P.T)


def tilt_posterior(joint, L, nu):
    """Exponential tilt toward span(L): the precision gains nu on the
    orthogonal complement, Omega~ = Omega + nu (I-P), and the mode moves to
    m~ = Omega~^{-1} Omega m."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    Q = len(joint.eta_mode)
    U = np.eye(Q) - projection(L)
    prec_t = joint.eta_precision + nu * U
    prec_t = 0.5 * (prec_t + prec_t.T)
    try:
        c = cho_factor(prec_t)
    except LinAlgError:
        raise ValueError("tilted precision is not positive definite")
    mode_t = cho_solve(c, joint.eta_precision @ joint.eta_mode)
    return JointFit(eta_mode=mode_t, eta_precision=prec_t, layout=joint.layout,
                    prior_var=joint.prior_var)


def _logdet_chol(c):
    return 2.0 * float(np.sum(np.log(np.diag(c[0]))))


def select_nu(joint, L, grid=None):
    """Pick nu on the grid maximizing the approximate log Bayes factor of the
    tilted model over the untilted one; ties go to the smaller nu.

    Returns (nu_star, [(nu, score), ...]).
    """
    if grid is None:
        grid = np.concatenate([[0.0], np.logspace(-2.0, 6.0, 25)])
    grid = np.sort(np.asarray(grid, dtype=float))
    if len(grid) == 0:
        raise ValueError("empty nu grid")
    if np.any(grid < 0):
        raise ValueError("nu must be non-negative")

    Q = len(joint.eta_mode)
    U = np.eye(Q) - projection(L)
    U = 0.5 * (U + U.T)
    omega = joint.eta_precision
    m = joint.eta_mode
    c0 = cho_factor(omega)
    logdet_omega = _logdet_chol(c0)
    r = omega @ m
    quad_full = float(m @ r)

    # prior expectation term: eta ~ N(0, diag(prior_var)) restricted to the
    # coordinates the tilt touches; eigenvalues computed once, reused per nu
    s = np.sqrt(joint.prior_var)
    S0 = (s[:, None] * U) * s[None, :]
    ev = np.linalg.eigvalsh(0.5 * (S0 + S0.T))
    ev = np.clip(ev, 0.0, None)

    scores = []
    for nu in grid:
        if nu == 0.0:
            # identically zero: the tilt factor is 1
            scores.append((0.0, 0.0))
            continue
        A = omega + nu * U
        try:
            cA = cho_factor(0.5 * (A + A.T))
        except LinAlgError:
            raise ValueError("precision plus tilt not positive definite at nu=%g" % nu)
        quad = quad_full - float(r @ cho_solve(cA, r))
        log_e_post = 0.5 * (logdet_omega - _logdet_chol(cA)) - 0.5 * quad
        log_e_prior = -0.5 * float(np.sum(np.log1p(nu * ev)))
        scores.append((float(nu), float(log_e_post - log_e_prior)))
    # grid is ascending, so the first maximum is the smallest nu among ties
    best_score = max(sc for _, sc in scores)
    nu_star = next(nu for nu, sc in scores if sc == best_score)
    return nu_star, scores


def pathogen_summaries(joint, plan, level=0.95):
    """Per-pathogen rate-ratio rows from the (possibly tilted) joint fit."""
    cov = np.linalg.inv(joint.eta_precision)
    sd = np.sqrt(np.diag(cov))
    z = float(-ndtri((1.0 - level) / 2.0))
    jp = plan.j_prime
    out = {}
    for k, lab in enumerate(plan.pathogen_labels):
        rows = []
        for j in range(plan.J):
            q = k * jp + j
            name = joint.layout[q].split(":", 1)[1]
            mval = joint.eta_mode[q]
            rows.append(SummaryRow(
                label=name,
                rate_ratio_point=float(np.exp(mval)),
                ci_low=float(np.exp(mval - z * sd[q])),
                ci_high=float(np.exp(mval + z * sd[q])),
                prob_rr_gt_1=float(ndtr(mval / sd[q])),
                flag="uninterpretable" if j == 0 else "",
            ))
        out[lab] = rows
    return out


def joint_to_dict(joint):
    return {
        "layout": list(joint.layout),
        "eta_mode": [float(v) for v in joint.eta_mode],
        "eta_precision": [float(v) for v in np.asarray(joint.eta_precision).ravel()],
        "prior_var": [float(v) for v in joint.prior_var],
    }


def joint_from_dict(d):
    q = len(d["layout"])
    return JointFit(
        eta_mode=np.array(d["eta_mode"], dtype=float),
        eta_precision=np.array(d["eta_precision"], dtype=float).reshape(q, q),
        layout=tuple(d["layout"]),
        prior_var=np.array(d["prior_var"], dtype=float),
    )
