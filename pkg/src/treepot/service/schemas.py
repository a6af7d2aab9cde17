"""Request/response models for the service; these mirror the JSON artifacts
the CLI reads and writes."""

from __future__ import annotations

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class TreeRef(BaseModel):
    """A tree with weights: inline spec JSON or a bundled fixture name."""

    fixture: Optional[str] = None
    spec: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.fixture is None) == (self.spec is None):
            raise ValueError("provide exactly one of 'fixture' or 'spec'")
        return self


class RaySpec(BaseModel):
    """Boundary ray: explicit child-index prefix plus a repeating tail pattern."""

    prefix: List[int] = Field(default_factory=list)
    repeat: List[int] = Field(default_factory=lambda: [0])


class MatrixRef(BaseModel):
    fixture: Optional[str] = None
    values: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.fixture is None) == (self.values is None):
            raise ValueError("provide exactly one of 'fixture' or 'values'")
        return self


class FamilyRef(BaseModel):
    fixture: Optional[str] = None
    family: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.fixture is None) == (self.family is None):
            raise ValueError("provide exactly one of 'fixture' or 'family'")
        return self


class VerifyInverseRequest(BaseModel):
    tree: TreeRef
    depth: int = 2
    mode: str = "absorbed"
    tol: float = 1e-10


class VerifyInverseResponse(BaseModel):
    residual: float
    nodes: int
    certified: bool


class PotentialRequest(BaseModel):
    tree: TreeRef
    depth: int = 1


class PotentialResponse(BaseModel):
    order: List[str]
    potential: List[List[float]]
    csv: str


class HarmonicDecompRequest(BaseModel):
    tree: TreeRef
    depth: int = 1


class HarmonicDecompResponse(BaseModel):
    order: List[str]
    rank: int
    btilde: List[str]
    qbar_residual: float
    potential: List[List[float]]
    harmonic: List[List[float]]


class ChainSimulateRequest(BaseModel):
    tree: TreeRef
    start: str = ""
    seed: int
    paths: int = 1
    mode: str = "absorbed"
    max_level: int = 64
    max_time: Optional[float] = None
    resolution: int = 2
    include_trajectory: bool = False
    workers: int = 1


class ChainSimulateResponse(BaseModel):
    status_counts: Dict[str, int]
    exit_frequencies: Dict[str, int]
    trajectory_csv: Optional[str] = None


class ClassifyRequest(BaseModel):
    tree: TreeRef
    tol: float = 1e-8
    schedule: List[int] = Field(default_factory=lambda: [8, 16, 24, 32, 40, 48, 56, 64])


class BracketModel(BaseModel):
    lower: float
    upper: float
    mid: float
    depth: int
    converged: bool


class ClassifyResponse(BaseModel):
    classification: str
    gbar_root: BracketModel
    shortcut: Optional[str] = None


class AbsorptionRequest(BaseModel):
    tree: TreeRef
    node: str = ""
    tol: float = 1e-8
    schedule: List[int] = Field(default_factory=lambda: [8, 16, 24, 32, 40, 48, 56, 64])


class HittingRequest(BaseModel):
    tree: TreeRef
    source: str
    target: str
    mode: str = "absorbed"
    tol: float = 1e-8


class ExitMeasureRequest(BaseModel):
    tree: TreeRef
    resolution: int = 2
    tol: float = 1e-10
    mode: str = "absorbed"


class ExitMeasureResponse(BaseModel):
    mode: str
    resolution: int
    escape_probability: List[float]
    converged: bool
    masses: Dict[str, List[float]]


class BoundaryKernelRequest(BaseModel):
    tree: TreeRef
    mode: str = "absorbed"
    t: float = 1.0
    xi: RaySpec = RaySpec()
    eta: RaySpec = RaySpec(prefix=[1])
    resolution: int = 4


class BoundaryKernelResponse(BaseModel):
    p: float
    p_error: float
    green_residual: Optional[float] = None
    meet_level: int


class BoundarySimulateRequest(BaseModel):
    tree: TreeRef
    seed: int
    paths: int = 1000
    resolution: int = 4
    horizon: float = 10.0
    mode: str = "absorbed"
    start: RaySpec = RaySpec()
    occupancy_times: List[float] = Field(default_factory=lambda: [0.5])
    workers: int = 1


class BoundarySimulateResponse(BaseModel):
    paths: int
    killed: int
    mean_lifetime: Optional[float]
    lifetime_histogram: Dict[str, int]
    occupancy: Dict[str, Dict[str, float]]
    mean_renewals: float


class MartinRequest(BaseModel):
    tree: TreeRef
    node: str
    ray: RaySpec = RaySpec()
    mode: str = "absorbed"
    resolution: int = 4


class MartinResponse(BaseModel):
    value: float
    error: float
    mode: str
    flagged: bool
    note: str = ""


class UltraCheckRequest(BaseModel):
    matrix: Optional[MatrixRef] = None
    family: Optional[FamilyRef] = None
    resolution: int = 2
    probe_depth: int = 10


class UltraEmbedRequest(BaseModel):
    matrix: MatrixRef


class UltraGeneratorRequest(BaseModel):
    matrix: MatrixRef
    check: bool = True
    tol: float = 1e-10


class ReportRequest(BaseModel):
    fast: bool = False


class CriterionModel(BaseModel):
    name: str
    passed: bool
    detail: str
    seconds: float


class ReportResponse(BaseModel):
    passed: bool
    criteria: List[CriterionModel]
