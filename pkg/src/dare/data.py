"""Domain types, dataset validation, and parameter packing.

Data layout is long format: one row per subject-interval with the interval
length tau, the binary outcome y, and the covariate vector (intercept first).
Subjects exit the study at the first detected infection, so y=1 can only
appear on a subject's last row.
"""

import csv
import hashlib
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Kernel(Enum):
    EXPONENTIAL = "exponential"
    BETA_POISSON = "beta-poisson"


class DataError(ValueError):
    """Raised by validate_dataset; carries the full list of row-located errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ObservationRow:
    subject_id: str
    interval_index: int  # t = 1..T_i, contiguous within subject
    tau: float  # interval length, time units
    outcome: int  # 0/1
    covariates: tuple  # length J, first entry 1.0 (intercept)


@dataclass(frozen=True)
class Dataset:
    rows: tuple
    covariate_names: tuple
    n_subjects: int

    def covariate_matrix(self):
        return np.array([r.covariates for r in self.rows], dtype=float)

    def tau_vector(self):
        return np.array([r.tau for r in self.rows], dtype=float)

    def outcome_vector(self):
        return np.array([r.outcome for r in self.rows], dtype=np.int64)

    def digest(self):
        """sha256 of a canonical serialization, for artifact provenance."""
        h = hashlib.sha256()
        h.update(json.dumps(list(self.covariate_names)).encode())
        for r in self.rows:
            h.update(
                ("%s,%d,%.17g,%d," % (r.subject_id, r.interval_index, r.tau, r.outcome)).encode()
            )
            h.update(",".join("%.17g" % c for c in r.covariates).encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class DoseResponseSpec:
    kernel: Kernel
    fixed_value: float = 1.0  # theta (exponential) or theta_2 (beta-Poisson)

    def __post_init__(self):
        if self.fixed_value != 1.0:
            raise ValueError("fixed dose-response parameter must be 1 (identifiability convention)")

    @property
    def n_free_params(self):
        return 1 if self.kernel is Kernel.BETA_POISSON else 0


@dataclass(frozen=True)
class ParamVector:
    beta: tuple  # natural scale, length J
    log_sigma: float
    log_theta1: float = None  # present iff beta-Poisson

    def __post_init__(self):
        arr = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(arr)) or not np.isfinite(self.log_sigma):
            raise ValueError("non-finite parameter")
        if self.log_theta1 is not None and not np.isfinite(self.log_theta1):
            raise ValueError("non-finite parameter")
        object.__setattr__(self, "beta", tuple(float(b) for b in arr))

    @property
    def sigma(self):
        return float(np.exp(self.log_sigma))

    @property
    def theta1(self):
        return None if self.log_theta1 is None else float(np.exp(self.log_theta1))


@dataclass(frozen=True)
class PriorSpec:
    beta_sd: tuple  # independent zero-mean Gaussian scales, length J
    sigma_shape: float = 2.0  # gamma(shape, rate) on sigma
    sigma_rate: float = 2.0
    theta1_mean: float = 1.0  # exponential prior mean on theta_1

    def __post_init__(self):
        sd = np.asarray(self.beta_sd, dtype=float)
        if np.any(sd <= 0) or min(self.sigma_shape, self.sigma_rate, self.theta1_mean) <= 0:
            raise ValueError("prior hyperparameters must be positive")
        object.__setattr__(self, "beta_sd", tuple(float(s) for s in sd))

    def to_dict(self):
        return {
            "beta_sd": list(self.beta_sd),
            "sigma_shape": self.sigma_shape,
            "sigma_rate": self.sigma_rate,
            "theta1_mean": self.theta1_mean,
        }

    @staticmethod
    def from_dict(d):
        return PriorSpec(
            beta_sd=tuple(d["beta_sd"]),
            sigma_shape=d.get("sigma_shape", 2.0),
            sigma_rate=d.get("sigma_rate", 2.0),
            theta1_mean=d.get("theta1_mean", 1.0),
        )


def default_priors(n_covariates):
    """N(0,10^2) on the intercept, N(0,2.5^2) on the rest, gamma(2,2) on sigma,
    exponential(mean 1) on theta_1."""
    return PriorSpec(beta_sd=(10.0,) + (2.5,) * (n_covariates - 1))


def validate_dataset(raw_rows, covariate_names):
    """Check all dataset invariants and return a Dataset.

    raw_rows: iterable of (subject_id, interval_index, tau, outcome, covariates)
    where covariates excludes the intercept (it is synthesized here).
    Raises DataError listing every violation with its row location.
    """
    errors = []
    n_cov = len(covariate_names)
    by_subject = {}
    order = []
    for pos, raw in enumerate(raw_rows):
        sid, t, tau, y, cov = raw
        loc = "row %d (subject %s)" % (pos + 1, sid)
        try:
            t = int(t)
            tau = float(tau)
            y = int(y)
            cov = [float(c) for c in cov]
        except (TypeError, ValueError):
            errors.append("%s: missing or non-numeric value" % loc)
            continue
        if not np.isfinite(tau) or tau <= 0:
            errors.append("%s: non-positive interval length" % loc)
        if y not in (0, 1):
            errors.append("%s: outcome must be 0 or 1" % loc)
        if len(cov) != n_cov or not all(np.isfinite(cov)):
            errors.append("%s: expected %d finite covariates, got %d" % (loc, n_cov, len(cov)))
        sid = str(sid)
        if sid not in by_subject:
            by_subject[sid] = []
            order.append(sid)
        by_subject[sid].append((t, tau, y, cov, pos + 1))
    if errors:
        raise DataError(errors)

    rows = []
    for sid in order:
        recs = sorted(by_subject[sid], key=lambda r: r[0])
        ts = [r[0] for r in recs]
        if ts != list(range(1, len(ts) + 1)):
            errors.append("subject %s: interval indices must be 1..T with no gaps, got %s" % (sid, ts))
            continue
        for k, (t, tau, y, cov, pos) in enumerate(recs):
            if y == 1 and k != len(recs) - 1:
                errors.append("row %d (subject %s): observation after detected infection" % (pos, sid))
        for t, tau, y, cov, pos in recs:
            rows.append(ObservationRow(sid, t, tau, y, (1.0,) + tuple(cov)))
    if errors:
        raise DataError(errors)
    if not rows:
        raise DataError(["dataset contains no rows"])
    return Dataset(rows=tuple(rows), covariate_names=("intercept",) + tuple(covariate_names),
                   n_subjects=len(order))


def param_pack(beta, sigma, theta1=None):
    """Natural-scale parameters -> ParamVector on the optimization scale."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if theta1 is not None and theta1 <= 0:
        raise ValueError("theta1 must be positive")
    return ParamVector(
        beta=tuple(np.asarray(beta, dtype=float)),
        log_sigma=float(np.log(sigma)),
        log_theta1=None if theta1 is None else float(np.log(theta1)),
    )


def param_unpack(params):
    """ParamVector -> (beta array, sigma, theta1 or None)."""
    return np.array(params.beta), params.sigma, params.theta1


def params_to_array(params):
    """Optimization-scale flat vector: (beta..., log_theta1 if present, log_sigma)."""
    tail = [] if params.log_theta1 is None else [params.log_theta1]
    return np.array(list(params.beta) + tail + [params.log_sigma])


def params_from_array(u, n_covariates, has_theta1):
    u = np.asarray(u, dtype=float)
    beta = tuple(u[:n_covariates])
    if has_theta1:
        return ParamVector(beta=beta, log_theta1=float(u[n_covariates]), log_sigma=float(u[n_covariates + 1]))
    return ParamVector(beta=beta, log_sigma=float(u[n_covariates]))


def param_labels(covariate_names, has_theta1, include_sigma=True):
    labels = list(covariate_names)
    if has_theta1:
        labels.append("log_theta1")
    if include_sigma:
        labels.append("log_sigma")
    return labels


def load_csv(path):
    """Read a long-format dataset CSV: subject_id,t,tau,y,<covariates...>."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(["empty CSV file: %s" % path])
        expected = ["subject_id", "t", "tau", "y"]
        if header[:4] != expected:
            raise DataError(["bad CSV header: expected %s,<covariates...>" % ",".join(expected)])
        cov_names = header[4:]
        raw = []
        for line in reader:
            if not line:
                continue
            if len(line) != 4 + len(cov_names):
                raise DataError(["row %d: expected %d fields, got %d"
                                 % (reader.line_num, 4 + len(cov_names), len(line))])
            raw.append((line[0], line[1], line[2], line[3], line[4:]))
    return validate_dataset(raw, cov_names)


def write_csv(dataset, path):
    """Write a Dataset in the long CSV format (intercept column not written)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["subject_id", "t", "tau", "y"] + list(dataset.covariate_names[1:]))
        for r in dataset.rows:
            writer.writerow([r.subject_id, r.interval_index, "%.17g" % r.tau, r.outcome]
                            + ["%.17g" % c for c in r.covariates[1:]])
