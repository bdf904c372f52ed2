from mfe.estimation.inference import covariance_homogeneous, sandwich_covariance
from mfe.estimation.likelihood import (
    ObservedData,
    equilibrium_sensitivity,
    information_matrix,
    log_likelihood,
    loglik_gradient,
    loglik_value_and_gradient,
    predicted_frequencies,
    simulate_observed,
)
from mfe.estimation.mpec import MpecState, fit_mpec, initial_state, mpec_residual
from mfe.estimation.nested import EstimationResult, fit_nested
from mfe.estimation.nonparametric import surplus_nonparametric_cs
from mfe.families.base import MatchingFamily
from mfe.models import FitMethod, SolverOptions


def fit(
    family: MatchingFamily,
    observed: ObservedData,
    theta_init,
    opts: SolverOptions | None = None,
    method: FitMethod = "nested",
) -> EstimationResult:
    if method == "mpec":
        return fit_mpec(family, observed, theta_init, opts)
    return fit_nested(family, observed, theta_init, opts)


__all__ = [
    "EstimationResult",
    "MpecState",
    "ObservedData",
    "covariance_homogeneous",
    "equilibrium_sensitivity",
    "fit",
    "fit_mpec",
    "fit_nested",
    "information_matrix",
    "initial_state",
    "log_likelihood",
    "loglik_gradient",
    "loglik_value_and_gradient",
    "mpec_residual",
    "predicted_frequencies",
    "sandwich_covariance",
    "simulate_observed",
    "surplus_nonparametric_cs",
]
