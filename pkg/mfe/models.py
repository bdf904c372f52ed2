from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mfe.config import settings

SolverMethod = Literal["ipfp", "newton"]
Command = Literal["solve", "fit", "ci", "counterfactual", "surplus", "simulate"]
FitMethod = Literal["nested", "mpec"]
CounterfactualMethod = Literal["parametric", "parameter-free"]
BenchmarkKind = Literal["system", "estimation"]


class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(default=settings.default_tol, gt=0)
    max_outer_iter: int = Field(default=settings.default_max_iter, ge=1)
    # None means min(tol * 1e-2, 1e-12).
    inner_tol: float | None = Field(default=None, gt=0)
    method: SolverMethod = "ipfp"
    parallel: bool = False

    @model_validator(mode="after")
    def _inner_not_looser(self) -> "SolverOptions":
        if self.inner_tol is not None and self.inner_tol > self.tol:
            raise ValueError("inner_tol must not exceed tol")
        return self

    @property
    def effective_inner_tol(self) -> float:
        if self.inner_tol is not None:
            return self.inner_tol
        return min(self.tol * 1e-2, 1e-12)


class FamilyConfig(BaseModel):
    """Family name plus its family-specific parameter block.

    `params` keys understood by the builders in `mfe.families.catalogue`:
    theta, design, alpha_design, gamma_design, tau, acceptance, rho_over_delta,
    exponent_a, exponent_b, psi, Psi, x_values, y_values, x_types, y_types.
A design is one of free, constant, interaction or age-education; the last
reads one [age, education] pair per type from x_types and y_types.
    """

    model_config = ConfigDict(extra="forbid")

    name: str = "choo-siow"
    params: dict[str, Any] = Field(default_factory=dict)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Command
    family: FamilyConfig = Field(default_factory=FamilyConfig)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    seed: int = Field(default=0, ge=0)

    matching: str | None = None
    new_margins: str | None = None
    out: str | None = None

    fit_method: FitMethod = "nested"
    counterfactual_method: CounterfactualMethod = "parametric"
    theta_init: list[float] | None = None

    benchmark: BenchmarkKind = "system"
    sizes: list[int] = Field(default_factory=lambda: [10])
    replications: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _required_paths(self) -> "RunConfig":
        if self.command in ("solve", "fit", "ci", "counterfactual", "surplus") and not self.matching:
            raise ValueError(f"command '{self.command}' requires a matching file")
        if self.command == "counterfactual" and not self.new_margins:
            raise ValueError("command 'counterfactual' requires a new-margins file")
        if any(s < 1 for s in self.sizes):
            raise ValueError("benchmark sizes must be positive")
        return self


class BenchmarkRow(BaseModel):
    size: int
    method: str
    replications: int
    iterations_mean: float
    time_mean: float
    time_std: float
    failure_rate: float = Field(ge=0, le=100)
    agreement: bool | None = None


class BenchmarkReport(BaseModel):
    kind: BenchmarkKind
    seed: int
    rows: list[BenchmarkRow] = Field(default_factory=list)

    def row(self, size: int, method: str) -> BenchmarkRow:
        for r in self.rows:
            if r.size == size and r.method == method:
                return r
        raise KeyError((size, method))
