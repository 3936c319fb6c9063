"""Dose accrual risk estimation from longitudinal binary infection data.

Fits a marginal likelihood in which each observation interval accrues a
log-normally distributed pathogen dose driven by covariates, pushed through
an exponential or beta-Poisson dose-response kernel and integrated out with
Gauss-Hermite quadrature. Inference is MAP plus a Laplace approximation. A
complementary log-log GLM baseline, a multi-pathogen posterior shrinkage
step, and a simulation/coverage harness round out the toolchain.
"""

from .backends import BACKEND_NAME
from .data import (DataError, Dataset, DoseResponseSpec, Kernel,
                   ObservationRow, ParamVector, PriorSpec, default_priors,
                   load_csv, param_pack, param_unpack, validate_dataset,
                   write_csv)
from .dose_response import response_prob, response_prob_partials
from .glm import cloglog_prob, fit_glm_map
from .inference import (PosteriorFit, SummaryRow, fit_from_dict, fit_map,
                        fit_to_dict, posterior_draws, predict_incidence,
                        summarize)
from .likelihood import (QuadratureRule, expected_dose_moments,
                         gauss_hermite_rule, interval_infection_prob,
                         log_likelihood, log_posterior, log_posterior_grad)
from .shrinkage import (JointFit, ShrinkagePlan, build_L, joint_from_dict,
                        joint_to_dict, pathogen_summaries, projection,
                        select_nu, stack_fits, tilt_posterior)
from .simulate import CoverageReport, SimConfig, run_coverage, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "CoverageReport",
    "DataError",
    "Dataset",
    "DoseResponseSpec",
    "JointFit",
    "Kernel",
    "ObservationRow",
    "ParamVector",
    "PosteriorFit",
    "PriorSpec",
    "QuadratureRule",
    "ShrinkagePlan",
    "SimConfig",
    "SummaryRow",
    "build_L",
    "cloglog_prob",
    "default_priors",
    "expected_dose_moments",
    "fit_from_dict",
    "fit_glm_map",
    "fit_map",
    "fit_to_dict",
    "gauss_hermite_rule",
    "interval_infection_prob",
    "joint_from_dict",
    "joint_to_dict",
    "load_csv",
    "log_likelihood",
    "log_posterior",
    "log_posterior_grad",
    "param_pack",
    "param_unpack",
    "pathogen_summaries",
    "posterior_draws",
    "predict_incidence",
    "projection",
    "response_prob",
    "response_prob_partials",
    "run_coverage",
    "select_nu",
    "simulate_dataset",
    "stack_fits",
    "summarize",
    "tilt_posterior",
    "validate_dataset",
    "write_csv",
]
