"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SystemModel(BaseModel):
    """Inline system definition (matrices row-major, as in the file format)."""

    name: str = "system"
    d: int
    n1: int
    n2: int
    A1: list[float]
    A2: Optional[list[float]] = None
    A3: Optional[list[float]] = None
    D: list[float]

    def as_dict(self) -> dict:
        out = {"name": self.name, "d": self.d, "n1": self.n1, "n2": self.n2,
               "D": self.D, "A1": self.A1}
        if self.A2 is not None:
            out["A2"] = self.A2
        if self.A3 is not None:
            out["A3"] = self.A3
        return out


class SKReportModel(BaseModel):
    passes: bool
    kernel_margin: float
    max_re_lambda: float
    dissipation_c: float
    ellipticity_min: float
    lambda0: float
    n_omega: int
    n_radii: int


class CheckRequest(BaseModel):
    system: Optional[str] = None          # builtin name or server-side path
    system_inline: Optional[SystemModel] = None
    n_omega: Optional[int] = None


class CheckResponse(BaseModel):
    system: str
    report: SKReportModel
    ellipticity_agrees: bool


class SymbolRequest(BaseModel):
    system: Optional[str] = None
    system_inline: Optional[SystemModel] = None
    xi: list[float]


class SymbolResponse(BaseModel):
    xi: list[float]
    real: list[list[float]]
    imag: list[list[float]]
    eigenvalues_real: list[float]
    eigenvalues_imag: list[float]


class PredictionsRequest(BaseModel):
    sigma1: float
    d: int
    p: float
    sigma: float = 0.0
    sigma_prime: float = 0.0


class PredictionsResponse(BaseModel):
    sigma1: float
    d: int
    p: float
    epsilon1: float
    alpha_star: float
    sigma1_star: float
    sigma2_star: float
    beta_star: float
    sigma: float
    sigma_prime: float


class GridModel(BaseModel):
    d: Optional[int] = None
    N: Optional[int] = None
    box_scale: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ExperimentRequest(BaseModel):
    """Mirror of the structured-text run config accepted by the CLI."""

    kind: Literal["check", "synth", "run-linear", "run-euler", "decay",
                  "profile", "delta-v"]
    name: str = "experiment"
    system: str = "euler1d"
    seed: int = 0
    out_dir: str = "out"
    grid: dict = Field(default_factory=dict)
    ladder: dict = Field(default_factory=dict)
    data: dict = Field(default_factory=dict)
    times: dict = Field(default_factory=dict)
    norms: list[dict] = Field(default_factory=list)
    fit: dict = Field(default_factory=dict)
    euler: dict = Field(default_factory=dict)
    series_csv: Optional[str] = None


class ReproduceRequest(BaseModel):
    out_dir: str = "out"
    seed: Optional[int] = None


class ReportResponse(BaseModel):
    passed: bool
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str
