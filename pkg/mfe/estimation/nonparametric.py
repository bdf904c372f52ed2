from __future__ import annotations

import numpy as np

from mfe.errors import DomainError
from mfe.estimation.likelihood import ObservedData
from mfe.families.design import SurplusTable


def surplus_nonparametric_cs(observed: ObservedData) -> SurplusTable:
    """Exact inversion of the logit TU matching function: Phi = 2 log mu_xy - log mu_x0 - log mu_0y.

    Cells with no observed couples come back prohibited.
    """
    mu = observed.matching
    if np.any(mu.mu_x0 <= 0) or np.any(mu.mu_0y <= 0):
        raise DomainError("every type needs a positive mass of singles to invert the surplus")
    empty = mu.mu_xy <= 0
    with np.errstate(divide="ignore"):
        phi = 2.0 * np.log(mu.mu_xy) - np.log(mu.mu_x0)[:, None] - np.log(mu.mu_0y)[None, :]
    return SurplusTable(mu.space, np.where(empty, 0.0, phi), empty)
