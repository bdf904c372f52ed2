from mfe.families.base import (
    BoundFamily,
    FamilyDescriptor,
    LogDerivatives,
    MatchingFamily,
    mf_grad_params,
    mf_grad_unmatched,
    mf_ratio_form,
    mf_value,
)
from mfe.families.catalogue import available_families, build_family, initial_theta
from mfe.families.choo_siow import ChooSiow
from mfe.families.cobb_douglas import CobbDouglas
from mfe.families.design import SurplusDesign, SurplusTable, age_education_names, surplus_parametric
from mfe.families.etu import EtuGkw, EtuParams, HarmonicMean, etu_distance
from mfe.families.menzel import Menzel
from mfe.families.search import SearchMatching

__all__ = [
    "BoundFamily",
    "ChooSiow",
    "CobbDouglas",
    "EtuGkw",
    "EtuParams",
    "FamilyDescriptor",
    "HarmonicMean",
    "LogDerivatives",
    "MatchingFamily",
    "Menzel",
    "SearchMatching",
    "SurplusDesign",
    "SurplusTable",
    "age_education_names",
    "available_families",
    "build_family",
    "etu_distance",
    "initial_theta",
    "mf_grad_params",
    "mf_grad_unmatched",
    "mf_ratio_form",
    "mf_value",
    "surplus_parametric",
]
