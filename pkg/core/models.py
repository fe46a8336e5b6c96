"""Pydantic models for data validation and serialization."""

from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _as_matrix(value: Any) -> np.ndarray:
    """Coerce array-like input into a float64 matrix of shape (N, d)."""
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2:
        raise ValueError(f"expected a list of vectors, got array of shape {array.shape}")
    return array


class ArrayModel(BaseModel):
    """Base for immutable models that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class NormKind(str, Enum):
    """Input norms used to build neighborhoods."""

    HOMOGENEOUS = "homo"
    HETEROGENEOUS = "hete"


class LossFamily(str, Enum):
    """Statistic compared between truth and prediction clouds."""

    W2 = "w2"
    MMD = "mmd"
    MSE = "mse"
    MEAN2VAR = "mean2var"


class Locality(str, Enum):
    """Whether a loss is averaged over δ-neighborhoods or taken over the full set."""

    LOCAL = "local"
    GLOBAL = "global"


class ModelKind(str, Enum):
    """Ground-truth generators."""

    LINEAR_GAUSSIAN = "linear-gaussian"
    NONLINEAR_EXP = "nonlinear-exp"
    ODE = "ode"


class LossKind(BaseModel):
    """A training objective: statistic family plus locality."""

    model_config = ConfigDict(frozen=True)

    family: LossFamily = LossFamily.W2
    locality: Locality = Locality.LOCAL

    @property
    def label(self) -> str:
        """Short name such as ``local-w2``."""
        return f"{self.locality.value}-{self.family.value}"

    @classmethod
    def parse(cls, label: str) -> "LossKind":
        """Parse ``local-w2`` / ``global-mse`` style labels."""
        locality, _, family = label.partition("-")
        return cls(family=LossFamily(family), locality=Locality(locality))

    @classmethod
    def all_kinds(cls) -> list["LossKind"]:
        """Every family/locality pair, local kinds first."""
        return [
            cls(family=family, locality=locality)
            for locality in Locality
            for family in LossFamily
        ]


# ---------------------------------------------------------------------------
# Point sets and transport
# ---------------------------------------------------------------------------


class PointCloud(ArrayModel):
    """Uniform empirical distribution over N points in R^d."""

    points: np.ndarray

    @field_validator("points", mode="before")
    @classmethod
    def _check_points(cls, value: Any) -> np.ndarray:
        points = _as_matrix(value)
        if points.shape[0] == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(points)):
            raise ValueError("point cloud has non-finite coordinates")
        return points

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def of(cls, value: Any) -> "PointCloud":
        """Wrap an array-like (or return an existing cloud unchanged)."""
        if isinstance(value, PointCloud):
            return value
        return cls(points=value)


class CouplingPlan(ArrayModel):
    """Optimal permutation between two equal-size uniform clouds."""

    assignment: np.ndarray
    cost: float = Field(ge=0.0)

    @field_validator("assignment", mode="before")
    @classmethod
    def _check_bijection(cls, value: Any) -> np.ndarray:
        assignment = np.asarray(value, dtype=np.int64)
        if assignment.ndim != 1:
            raise ValueError("assignment must be one-dimensional")
        if not np.array_equal(np.sort(assignment), np.arange(assignment.size)):
            raise ValueError("assignment is not a permutation")
        return assignment


# ---------------------------------------------------------------------------
# Neighborhoods
# ---------------------------------------------------------------------------


class InputNorm(BaseModel):
    """Homogeneous l2 norm or OLS-weighted heterogeneous norm on inputs."""

    model_config = ConfigDict(frozen=True)

    kind: NormKind = NormKind.HOMOGENEOUS
    weights: Optional[tuple[float, ...]] = None

    @model_validator(mode="after")
    def _check_weights(self) -> "InputNorm":
        if self.kind == NormKind.HETEROGENEOUS:
            if not self.weights:
                raise ValueError("heterogeneous norm requires weights")
            if not all(np.isfinite(self.weights)):
                raise ValueError("heterogeneous norm weights must be finite")
        return self


class NeighborhoodIndex(ArrayModel):
    """Per-anchor member lists of the δ-ball under an input norm."""

    delta: float = Field(gt=0.0)
    norm: InputNorm
    anchors: np.ndarray
    members: tuple[np.ndarray, ...]
    size: int = Field(ge=1, description="Number of indexed samples")

    @model_validator(mode="after")
    def _check_members(self) -> "NeighborhoodIndex":
        if len(self.members) != len(self.anchors):
            raise ValueError("one member list per anchor is required")
        return self

    @property
    def counts(self) -> np.ndarray:
        """N(x, δ) for every anchor."""
        return np.array([len(m) for m in self.members], dtype=np.int64)

    def flat_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (anchor position, member index) pairs."""
        owners = np.repeat(np.arange(len(self.members)), self.counts)
        members = np.concatenate(self.members) if self.members else np.empty(0, np.int64)
        return owners, members


# ---------------------------------------------------------------------------
# Samples and ground truth
# ---------------------------------------------------------------------------


class SampleSet(ArrayModel):
    """Observed input/output pairs (x_i, y_i)."""

    inputs: np.ndarray
    outputs: np.ndarray
    provenance: str = ""

    @field_validator("inputs", "outputs", mode="before")
    @classmethod
    def _check_matrix(cls, value: Any) -> np.ndarray:
        array = _as_matrix(value)
        if not np.all(np.isfinite(array)):
            raise ValueError("samples contain non-finite values")
        return array

    @model_validator(mode="after")
    def _check_lengths(self) -> "SampleSet":
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.outputs.shape[0]} outputs"
            )
        return self

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    def subset(self, rows: np.ndarray, provenance: Optional[str] = None) -> "SampleSet":
        """Rows of this set, in the given order."""
        return SampleSet(
            inputs=self.inputs[rows],
            outputs=self.outputs[rows],
            provenance=provenance or self.provenance,
        )


class UniformLaw(BaseModel):
    kind: Literal["uniform"] = "uniform"
    low: float = 0.0
    high: float = 1.0

    @model_validator(mode="after")
    def _check_bounds(self) -> "UniformLaw":
        if self.high < self.low:
            raise ValueError("uniform law needs low <= high")
        return self


class NormalLaw(BaseModel):
    kind: Literal["normal"] = "normal"
    mean: float = 0.0
    sd: float = Field(default=1.0, ge=0.0)


class ExponentialLaw(BaseModel):
    kind: Literal["exponential"] = "exponential"
    rate: float = Field(default=1.0, gt=0.0)


class BetaLaw(BaseModel):
    kind: Literal["beta"] = "beta"
    alpha: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=1.0, gt=0.0)


InputLaw = Annotated[
    Union[UniformLaw, NormalLaw, ExponentialLaw, BetaLaw], Field(discriminator="kind")
]


class ProductLaw(BaseModel):
    """Independent per-coordinate input law."""

    coords: list[InputLaw] = Field(min_length=1)

    @property
    def dim(self) -> int:
        return len(self.coords)


class OdeExperimentConfig(BaseModel):
    """Time grid and randomness of the latent-parameter ODE study."""

    horizon: float = Field(default=2.0, gt=0.0)
    m: int = Field(default=100, ge=1, description="Number of time steps")
    a: float = Field(default=0.0, ge=0.0, description="SD of the initial condition")
    sigma_u: float = Field(default=0.25, ge=0.0, description="Half-width of the latent law")
    trajectories: int = Field(default=100, ge=1)

    @property
    def dt(self) -> float:
        return self.horizon / self.m

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1, dtype=np.float64) * self.dt


class GroundTruthSpec(BaseModel):
    """A data-generating model together with its true parameters."""

    kind: ModelKind
    # linear-gaussian: coefficient means b_0..b_n and SDs sigma_0..sigma_n
    coef_means: Optional[list[float]] = None
    coef_sds: Optional[list[float]] = None
    # nonlinear-exp: latent (omega_1, omega_2) ~ N(latent_mean, latent_cov)
    latent_mean: Optional[list[float]] = None
    latent_cov: Optional[list[list[float]]] = None
    ode: Optional[OdeExperimentConfig] = None
    input_law: Optional[ProductLaw] = None

    @model_validator(mode="after")
    def _check_parameters(self) -> "GroundTruthSpec":
        if self.kind == ModelKind.LINEAR_GAUSSIAN:
            if self.coef_means is None or self.coef_sds is None:
                raise ValueError("linear-gaussian truth needs coef_means and coef_sds")
            if len(self.coef_means) != len(self.coef_sds):
                raise ValueError("coef_means and coef_sds differ in length")
            if not all(np.isfinite(self.coef_sds)):
                raise ValueError("coef_sds must be finite")
        elif self.kind == ModelKind.NONLINEAR_EXP:
            if self.latent_mean is None or self.latent_cov is None:
                raise ValueError("nonlinear-exp truth needs latent_mean and latent_cov")
            cov = np.asarray(self.latent_cov, dtype=np.float64)
            if cov.shape != (2, 2) or len(self.latent_mean) != 2:
                raise ValueError("nonlinear-exp latent law is two-dimensional")
            if not np.allclose(cov, cov.T):
                raise ValueError("latent covariance is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-12:
                raise ValueError("latent covariance is not positive semi-definite")
        elif self.ode is None:
            raise ValueError("ode truth needs an OdeExperimentConfig")
        return self

    @classmethod
    def linear_default(cls) -> "GroundTruthSpec":
        """b = (1, 1, 2, 3), sigma = (0.1, 0.2, 0.3, 0.4) with the Exp/Normal/Beta inputs."""
        return cls(
            kind=ModelKind.LINEAR_GAUSSIAN,
            coef_means=[1.0, 1.0, 2.0, 3.0],
            coef_sds=[0.1, 0.2, 0.3, 0.4],
            input_law=ProductLaw(
                coords=[
                    ExponentialLaw(rate=4.0),
                    NormalLaw(mean=0.0, sd=0.5),
                    BetaLaw(alpha=5.0, beta=5.0),
                ]
            ),
        )

    @classmethod
    def nonlinear_default(
        cls,
        latent_cov: Optional[list[list[float]]] = None,
        x_half_width: float = 0.5,
    ) -> "GroundTruthSpec":
        """y = omega_1 (1 - exp(-omega_2 x)) + 5 with the correlated latent pair."""
        return cls(
            kind=ModelKind.NONLINEAR_EXP,
            latent_mean=[19.1426, 0.5311],
            latent_cov=latent_cov or [[6.22864, -0.4322], [-0.4322, 0.04124]],
            input_law=ProductLaw(coords=[UniformLaw(low=-x_half_width, high=x_half_width)]),
        )


class Trajectory(ArrayModel):
    """Time-gridded path y(y0, t_i; omega)."""

    y0: np.ndarray
    latent: float
    times: np.ndarray
    states: np.ndarray

    @model_validator(mode="after")
    def _check_states(self) -> "Trajectory":
        if self.states.shape != (self.times.shape[0], self.y0.shape[0]):
            raise ValueError("states must have one row per grid time")
        if not np.array_equal(self.states[0], self.y0):
            raise ValueError("trajectory must start at its initial condition")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory has non-finite states")
        return self


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------


class TrainConfig(BaseModel):
    """Optimizer and loss settings of one training run."""

    epochs: int = Field(default=1000, ge=0)
    lr: float = Field(default=0.02, gt=0.0)
    weight_decay: float = Field(default=0.005, ge=0.0)
    delta: float = Field(default=0.1, gt=0.0)
    loss: LossKind = Field(default_factory=LossKind)
    seed: int = Field(default=0, ge=0)
    repeats: int = Field(default=5, ge=1)
    log_every: int = Field(default=100, ge=1)


class BoundInputs(BaseModel):
    """Constants entering the estimator error bound."""

    M: float = Field(gt=0.0, description="Bound on the squared output norm")
    L: float = Field(gt=0.0, description="Lipschitz constant in the input")
    C: float = Field(default=1.0, gt=0.0)
    N: int = Field(ge=1, description="Total number of samples")
    delta: float = Field(gt=0.0)
    counts: list[int] = Field(min_length=1)
    n: int = Field(ge=1, description="Input dimension")

    @field_validator("counts")
    @classmethod
    def _check_counts(cls, value: list[int]) -> list[int]:
        if min(value) < 1:
            raise ValueError("neighborhood counts must be >= 1")
        return value


class AnchorMoments(ArrayModel):
    """Per-anchor empirical mean and SD of outputs inside a δ0-ball."""

    anchors: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    counts: np.ndarray
    excluded: np.ndarray


class MomentErrorReport(BaseModel):
    """Relative errors in conditional means and SDs."""

    mean_error: float = Field(ge=0.0)
    sd_error: float = Field(ge=0.0)
    truth_means: list[float] = Field(default_factory=list)
    pred_means: list[float] = Field(default_factory=list)
    truth_sds: list[float] = Field(default_factory=list)
    pred_sds: list[float] = Field(default_factory=list)


class ExperimentReport(BaseModel):
    """Everything needed to reproduce and inspect one experiment run."""

    experiment: str
    config: dict[str, Any] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=list)
    metrics: dict[str, Any] = Field(default_factory=dict)
    traces: dict[str, str] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
    library_version: str = ""


class OdeErrorReport(BaseModel):
    """Integrated and per-slice errors of a reconstructed ODE."""

    error_in_yhat: float = Field(ge=0.0)
    error_in_ghat: Optional[float] = Field(default=None, ge=0.0)
    times: list[float] = Field(default_factory=list)
    slice_y_error: list[float] = Field(default_factory=list)
    slice_g_error: list[float] = Field(default_factory=list)


class SeedResult(ArrayModel):
    """Outcome of one repeat, returned from a worker to the orchestrating process."""

    seed: int
    metrics: dict[str, Optional[float]] = Field(default_factory=dict)
    curves: dict[str, dict[str, list[float]]] = Field(default_factory=dict)
    trajectories: dict[str, list[Trajectory]] = Field(default_factory=dict)
    checkpoint: list[tuple[str, float]] = Field(default_factory=list)
    loss_trace: list[float] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


class ExperimentConfig(BaseModel):
    """Settings shared by every experiment."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0)
    repeats: int = Field(default=5, ge=1)
    epochs: int = Field(default=1000, ge=0)
    lr: float = Field(default=0.02, gt=0.0)
    weight_decay: float = Field(default=0.005, ge=0.0)
    delta: float = Field(default=0.1, gt=0.0)
    loss: str = "local-w2"
    log_every: int = Field(default=100, ge=1)

    @field_validator("loss")
    @classmethod
    def _check_loss(cls, value: str) -> str:
        return LossKind.parse(value).label

    @property
    def loss_kind(self) -> LossKind:
        return LossKind.parse(self.loss)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.seed, self.seed + self.repeats))

    def train_config(self, seed: int, **overrides: Any) -> TrainConfig:
        """TrainConfig for one repeat."""
        values = dict(
            epochs=self.epochs,
            lr=self.lr,
            weight_decay=self.weight_decay,
            delta=self.delta,
            loss=self.loss_kind,
            seed=seed,
            repeats=1,
            log_every=self.log_every,
        )
        values.update(overrides)
        return TrainConfig(**values)


class LinregConfig(ExperimentConfig):
    """Linear-Gaussian recovery with three inputs."""

    n: int = Field(default=1000, ge=2, description="Training samples")
    norm: NormKind = NormKind.HETEROGENEOUS
    probe_draws: int = Field(default=100, ge=2)
    lipschitz_pairs: int = Field(default=1000, ge=1)


class NnReconConfig(ExperimentConfig):
    """Weight-uncertain MLP on the nonlinear exponential model."""

    n: int = Field(default=1000, ge=2)
    lr: float = Field(default=0.025, gt=0.0)
    delta: float = Field(default=0.025, gt=0.0)
    width: int = Field(default=50, ge=1)
    depth: int = Field(default=4, ge=1)
    resnet: bool = True
    deterministic: bool = Field(default=False, description="Also train a spread-free MLP with MSE")
    test_draws: int = Field(default=100, ge=2)
    x_half_width: float = Field(default=0.5, gt=0.0, description="Training inputs ~ U(-a, a)")
    latent_sd: Optional[float] = Field(default=None, gt=0.0, description="Isotropic latent SD")

    @property
    def test_points(self) -> np.ndarray:
        """x = -0.5 + 0.1 i, i = 0..10."""
        return -0.5 + 0.1 * np.arange(11, dtype=np.float64)

    def truth(self) -> GroundTruthSpec:
        cov = None
        if self.latent_sd is not None:
            cov = [[self.latent_sd**2, 0.0], [0.0, self.latent_sd**2]]
        return GroundTruthSpec.nonlinear_default(latent_cov=cov, x_half_width=self.x_half_width)


class ConcreteConfig(ExperimentConfig):
    """Weight-uncertain MLP on a six-input tabular dataset."""

    data: Optional[Path] = None
    delta: float = Field(default=0.05, gt=0.0)
    delta0: float = Field(default=0.2, gt=0.0)
    min_count: int = Field(default=5, ge=1)
    norm: NormKind = NormKind.HETEROGENEOUS
    width: int = Field(default=50, ge=1)
    depth: int = Field(default=4, ge=1)
    resnet: bool = True
    deterministic: bool = False
    train_fraction: float = Field(default=2.0 / 3.0, gt=0.0, lt=1.0)


class OdeRunConfig(ExperimentConfig):
    """Neural right-hand side of the latent-parameter ODE."""

    lr: float = Field(default=0.005, gt=0.0)
    epochs: int = Field(default=500, ge=0)
    delta0: float = Field(default=0.1, gt=0.0)
    width: int = Field(default=100, ge=1)
    depth: int = Field(default=2, ge=1)
    resnet: bool = False
    a: float = Field(default=0.0, ge=0.0)
    sigma_u: float = Field(default=0.25, ge=0.0)
    m: int = Field(default=100, ge=1)
    horizon: float = Field(default=2.0, gt=0.0)
    trajectories: int = Field(default=100, ge=2)
    g_budget: int = Field(default=200, ge=2)

    def ode_config(self) -> OdeExperimentConfig:
        return OdeExperimentConfig(
            horizon=self.horizon, m=self.m, a=self.a, sigma_u=self.sigma_u, trajectories=self.trajectories
        )


class DeltaSweepConfig(LinregConfig):
    values: list[float] = Field(default=[0.025, 0.05, 0.1, 0.2, 0.4], min_length=1)

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[float]) -> list[float]:
        if min(value) <= 0:
            raise ValueError("neighborhood radii must be positive")
        return value


class SizeSweepConfig(LinregConfig):
    values: list[int] = Field(default=[250, 500, 1000, 2000, 4000], min_length=1)

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[int]) -> list[int]:
        if min(value) < 2:
            raise ValueError("sample counts must be >= 2")
        return value


class Architecture(BaseModel):
    """MLP shape written as ``<width>x<depth>-<resnet|ff>``."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(ge=1)
    depth: int = Field(ge=1)
    resnet: bool = True

    @property
    def label(self) -> str:
        return f"{self.width}x{self.depth}-{'resnet' if self.resnet else 'ff'}"

    @classmethod
    def parse(cls, label: str) -> "Architecture":
        shape, _, mode = label.strip().partition("-")
        width, sep, depth = shape.partition("x")
        if not sep or mode not in ("resnet", "ff"):
            raise ValueError(f"architecture {label!r} is not <width>x<depth>-<resnet|ff>")
        return cls(width=int(width), depth=int(depth), resnet=mode == "resnet")


class ArchSweepConfig(NnReconConfig):
    delta: float = Field(default=0.1, gt=0.0)
    values: list[str] = Field(
        default=[
            "12x4-resnet",
            "25x4-resnet",
            "50x4-resnet",
            "100x4-resnet",
            "50x1-resnet",
            "50x2-resnet",
            "50x3-resnet",
            "50x1-ff",
            "50x2-ff",
            "50x3-ff",
            "50x4-ff",
        ],
        min_length=1,
    )

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[str]) -> list[str]:
        return [Architecture.parse(label).label for label in value]


class SpreadSweepConfig(NnReconConfig):
    """Latent SD sweep followed by a training-input width sweep."""

    values: list[float] = Field(default=[0.5, 1.0, 2.0, 4.0], description="Latent SDs")
    half_widths: list[float] = Field(default=[0.25, 0.5, 1.0, 2.0])

    @field_validator("values", "half_widths")
    @classmethod
    def _check_positive(cls, value: list[float]) -> list[float]:
        if value and min(value) <= 0:
            raise ValueError("sweep values must be positive")
        return value


class BenchLossConfig(NnReconConfig):
    values: list[str] = Field(default_factory=lambda: [k.label for k in LossKind.all_kinds()], min_length=1)

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[str]) -> list[str]:
        return [LossKind.parse(label).label for label in value]


class ExperimentOutcome(BaseModel):
    """What an experiment handler hands back for the report."""

    metrics: dict[str, Any] = Field(default_factory=dict)
    traces: dict[str, str] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)


class CheckResult(BaseModel):
    """Status of one verification check."""

    suite: str
    name: str
    passed: bool
    detail: str = ""
