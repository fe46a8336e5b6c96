"""Random variates, ground-truth sample synthesis and CSV ingestion."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from numpy.typing import ArrayLike
from pydantic import BaseModel
from scipy import linalg

from core.errors import InputError
from core.models import (
    BetaLaw,
    ExponentialLaw,
    GroundTruthSpec,
    InputLaw,
    ModelKind,
    NormalLaw,
    ProductLaw,
    SampleSet,
    UniformLaw,
)

from .ode_recon import simulate_dataset

logger = logging.getLogger(__name__)

# Columns of the concrete compressive strength study (slag and age are never read)
CONCRETE_INPUTS = [
    "cement",
    "fly_ash",
    "water",
    "superplasticizer",
    "coarse_aggregate",
    "fine_aggregate",
]
CONCRETE_OUTPUT = "strength"

# Significant digits written to CSV
CSV_FLOAT_FORMAT = "%.17g"


class RandomStreams:
    """Independent generators derived from one seed."""

    def __init__(self, seed: int):
        self.seed = seed
        data, train, evaluation = np.random.SeedSequence(seed).spawn(3)
        self.data = np.random.default_rng(data)
        self.evaluation = np.random.default_rng(evaluation)
        self.train = torch.Generator().manual_seed(int(train.generate_state(1, dtype=np.uint64)[0]))

    def torch_stream(self, rng: np.random.Generator) -> torch.Generator:
        """A torch generator seeded from a numpy stream."""
        return torch.Generator().manual_seed(int(rng.integers(0, 2**63 - 1)))


def _draw(law: InputLaw, count: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, UniformLaw):
        return rng.uniform(law.low, law.high, size=count)
    if isinstance(law, NormalLaw):
        return rng.normal(law.mean, law.sd, size=count)
    if isinstance(law, ExponentialLaw):
        return rng.exponential(1.0 / law.rate, size=count)
    if isinstance(law, BetaLaw):
        return rng.beta(law.alpha, law.beta, size=count)
    raise InputError(f"unsupported input law {law!r}")


def sample_inputs(law: Union[ProductLaw, InputLaw], count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw i.i.d. inputs.

    Args:
        law: A per-coordinate product law, or a single law for scalar inputs
        count: Number of draws
        rng: Data stream

    Returns:
        (count, n) array
    """
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    coords = law.coords if isinstance(law, ProductLaw) else [law]
    return np.column_stack([_draw(coord, count, rng) for coord in coords])


def _factor(cov: np.ndarray) -> np.ndarray:
    """Lower factor F with F F^T = cov; eigen-decomposition when Cholesky fails on a PSD matrix."""
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        eigvals, eigvecs = linalg.eigh(cov)
        if eigvals.min() < -1e-12:
            raise InputError("covariance is not positive semi-definite") from None
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def sample_correlated(mean: ArrayLike, cov: ArrayLike, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, k) draws from N(mean, cov)."""
    mean = np.asarray(mean, dtype=np.float64)
    factor = _factor(np.asarray(cov, dtype=np.float64))
    return mean + rng.standard_normal((count, mean.size)) @ factor.T


def _linear_outputs(spec: GroundTruthSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    means = np.asarray(spec.coef_means)
    sds = np.asarray(spec.coef_sds)
    if x.shape[1] != means.size - 1:
        raise InputError(f"truth has {means.size - 1} inputs, got {x.shape[1]}")
    coef = means + sds * rng.standard_normal((x.shape[0], means.size))
    return (coef[:, 1:] * x).sum(axis=1) + coef[:, 0]


def _nonlinear_outputs(spec: GroundTruthSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if x.shape[1] != 1:
        raise InputError(f"nonlinear truth has a scalar input, got width {x.shape[1]}")
    omega = sample_correlated(spec.latent_mean, spec.latent_cov, x.shape[0], rng)
    return omega[:, 0] * (1.0 - np.exp(-omega[:, 1] * x[:, 0])) + 5.0


def sample_ground_truth(
    spec: GroundTruthSpec,
    inputs: Optional[ArrayLike],
    rng: np.random.Generator,
    count: Optional[int] = None,
) -> SampleSet:
    """
    Draw outputs from a ground-truth model, one latent draw per sample.

    Args:
        spec: Model and true parameters
        inputs: (N, n) inputs; drawn from ``spec.input_law`` when None
        rng: Data stream
        count: Number of inputs to draw when ``inputs`` is None

    Returns:
        SampleSet; for ODE truth the inputs are the initial conditions and
        the outputs the flattened trajectory states
    """
    if inputs is None and spec.kind != ModelKind.ODE:
        if spec.input_law is None or count is None:
            raise InputError("either inputs or an input law and a count are required")
        inputs = sample_inputs(spec.input_law, count, rng)

    if spec.kind == ModelKind.ODE:
        trajectories = simulate_dataset(spec.ode, rng, y0=inputs)
        return SampleSet(
            inputs=np.stack([t.y0 for t in trajectories]),
            outputs=np.stack([t.states.reshape(-1) for t in trajectories]),
            provenance="ode",
        )

    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if spec.kind == ModelKind.LINEAR_GAUSSIAN:
        y = _linear_outputs(spec, x, rng)
    else:
        y = _nonlinear_outputs(spec, x, rng)
    return SampleSet(inputs=x, outputs=y.reshape(-1, 1), provenance=spec.kind.value)


def draws_at(spec: GroundTruthSpec, points: ArrayLike, draws: int, rng: np.random.Generator) -> np.ndarray:
    """(P, draws) scalar truth outputs, ``draws`` independent latent draws at each point."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    repeated = np.repeat(x, draws, axis=0)
    return sample_ground_truth(spec, repeated, rng).outputs.reshape(x.shape[0], draws)


def load_csv(path: Union[str, Path], input_columns: Sequence[str], output_column: str) -> SampleSet:
    """
    Read a SampleSet from a headed CSV file, keeping file row order.

    Args:
        path: CSV file (comma separated, one header row)
        input_columns: Names of the input columns, in order
        output_column: Name of the output column

    Returns:
        SampleSet with provenance set to the file name
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise InputError(f"dataset file is empty: {path}") from None

    frame.columns = [str(c).strip() for c in frame.columns]
    wanted = list(input_columns) + [output_column]
    missing = [name for name in wanted if name not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {missing}")
    if frame.empty:
        raise InputError(f"dataset file has no rows: {path}")

    numeric = {}
    for name in wanted:
        raw = frame[name].str.strip()
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64, na_value=np.nan)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise InputError(f"{path}: row {row + 1}, column '{name}': not a number: {raw.iloc[row]!r}")
        numeric[name] = values

    logger.info(f"Loaded {len(frame)} rows from {path}")
    return SampleSet(
        inputs=np.column_stack([numeric[name] for name in input_columns]),
        outputs=numeric[output_column].reshape(-1, 1),
        provenance=path.name,
    )


def write_csv(
    data: SampleSet, path: Union[str, Path], input_columns: Sequence[str], output_column: str
) -> Path:
    """Write a SampleSet with a header row; values keep 17 significant digits."""
    if len(input_columns) != data.input_dim or data.output_dim != 1:
        raise InputError("column names do not match the sample dimensions")
    frame = pd.DataFrame(data.inputs, columns=list(input_columns))
    frame[output_column] = data.outputs[:, 0]
    path = Path(path)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


class Scaler(BaseModel):
    """Affine map x -> (x - mean) / sd fitted on training inputs."""

    mean: list[float]
    sd: list[float]

    @classmethod
    def fit(cls, inputs: np.ndarray) -> "Scaler":
        sd = inputs.std(axis=0)
        constant = np.flatnonzero(sd == 0.0)
        if constant.size:
            raise InputError(f"input column(s) {constant.tolist()} are constant on the training rows")
        return cls(mean=inputs.mean(axis=0).tolist(), sd=sd.tolist())

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - np.asarray(self.mean)) / np.asarray(self.sd)

    def inverse(self, inputs: np.ndarray) -> np.ndarray:
        return inputs * np.asarray(self.sd) + np.asarray(self.mean)


def split_and_standardize(
    data: SampleSet, train_fraction: float = 2.0 / 3.0
) -> tuple[SampleSet, SampleSet, Scaler]:
    """
    Split in file order and standardize inputs with training statistics.

    Args:
        data: Ordered samples
        train_fraction: Leading share of rows used for training

    Returns:
        (train, test, scaler); train holds the first floor(fraction * N) rows
    """
    if len(data) < 3:
        raise InputError(f"need at least 3 rows to split, got {len(data)}")
    cut = int(np.floor(train_fraction * len(data) + 1e-9))
    if not 0 < cut < len(data):
        raise InputError(f"train fraction {train_fraction} leaves an empty split")

    rows = np.arange(len(data))
    train, test = data.subset(rows[:cut], "train"), data.subset(rows[cut:], "test")
    scaler = Scaler.fit(train.inputs)
    logger.info(f"Split {len(data)} rows into {len(train)} train / {len(test)} test; inputs standardized")
    return (
        SampleSet(inputs=scaler.transform(train.inputs), outputs=train.outputs, provenance="train"),
        SampleSet(inputs=scaler.transform(test.inputs), outputs=test.outputs, provenance="test"),
        scaler,
    )
