"""Forward models with Gaussian parameter uncertainty.

Two families are provided: a linear model whose coefficients are independent
Gaussians, and a multilayer perceptron whose every weight is an independent
Gaussian resampled for each input. Randomness enters only through a NoiseDraw
of standard-normal deviates, so with the draw frozen both models are smooth
functions of their means and spreads.
"""

import logging
from abc import ABC, abstractmethod
from typing import Optional, Union

import numpy as np
import torch
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, model_validator

from core.errors import InputError

from .autodiff import DTYPE, Layout, ParamVector

logger = logging.getLogger(__name__)

# Network parameters start at N(0, 1e-4)
MLP_INIT_SD = 1e-2


class LinearSpec(BaseModel):
    """Shape of the linear model y = sum_i w_i x_i + w_0."""

    input_dim: int = Field(ge=1)
    stochastic: bool = True


class MlpSpec(BaseModel):
    """Layer widths [n_in, hidden..., n_out] and propagation mode."""

    widths: list[int] = Field(description="Input width, hidden widths, output width")
    resnet: bool = False
    stochastic: bool = True

    @model_validator(mode="after")
    def _check_widths(self) -> "MlpSpec":
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least one layer (two widths)")
        if min(self.widths) < 1:
            raise ValueError("layer widths must be positive")
        hidden = self.widths[1:-1]
        if self.resnet and len(set(hidden)) > 1:
            raise ValueError("resnet propagation needs equal hidden widths")
        return self

    @classmethod
    def build(cls, inputs: int, outputs: int, width: int, depth: int, **kwargs) -> "MlpSpec":
        """Spec with ``depth`` hidden layers of ``width`` neurons."""
        return cls(widths=[inputs] + [width] * depth + [outputs], **kwargs)

    @property
    def layers(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer."""
        return list(zip(self.widths[:-1], self.widths[1:]))


ModelSpec = Union[LinearSpec, MlpSpec]


class NoiseDraw:
    """Standard-normal deviates, one per stochastic weight, with a leading batch axis."""

    def __init__(self, blocks: Optional[dict[str, torch.Tensor]] = None, batch: int = 0):
        self.blocks = blocks or {}
        self.batch = batch

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks


class LinearGaussianParams:
    """Means b_hat and raw spreads sigma_hat of the linear model (index 0 is the intercept)."""

    def __init__(self, spec: LinearSpec, vector: ParamVector):
        self.spec = spec
        self.vector = vector

    @staticmethod
    def layout(spec: LinearSpec) -> Layout:
        layout: Layout = [("coef.mean", (spec.input_dim + 1,))]
        if spec.stochastic:
            layout.append(("coef.spread", (spec.input_dim + 1,)))
        return layout

    @classmethod
    def from_values(cls, means: list[float], spreads: Optional[list[float]] = None) -> "LinearGaussianParams":
        spec = LinearSpec(input_dim=len(means) - 1, stochastic=spreads is not None)
        vector = ParamVector(cls.layout(spec))
        vector.set_block("coef.mean", torch.tensor(means, dtype=DTYPE))
        if spreads is not None:
            if len(spreads) != len(means):
                raise InputError("means and spreads differ in length")
            vector.set_block("coef.spread", torch.tensor(spreads, dtype=DTYPE))
        return cls(spec, vector)

    @property
    def means(self) -> torch.Tensor:
        return self.vector.block("coef.mean")

    @property
    def spreads(self) -> torch.Tensor:
        if "coef.spread" in self.vector:
            return self.vector.block("coef.spread")
        return torch.zeros(self.spec.input_dim + 1, dtype=DTYPE)


class StochasticMlpParams:
    """Per-weight means a, raw spreads sigma and deterministic biases b."""

    def __init__(self, spec: MlpSpec, vector: ParamVector):
        self.spec = spec
        self.vector = vector

    @staticmethod
    def layout(spec: MlpSpec) -> Layout:
        layout: Layout = []
        for k, (fan_in, fan_out) in enumerate(spec.layers):
            layout.append((f"layer{k}.mean", (fan_out, fan_in)))
            if spec.stochastic:
                layout.append((f"layer{k}.spread", (fan_out, fan_in)))
            layout.append((f"layer{k}.bias", (fan_out,)))
        return layout

    def mean(self, k: int) -> torch.Tensor:
        return self.vector.block(f"layer{k}.mean")

    def spread(self, k: int) -> Optional[torch.Tensor]:
        name = f"layer{k}.spread"
        return self.vector.block(name) if name in self.vector else None

    def bias(self, k: int) -> torch.Tensor:
        return self.vector.block(f"layer{k}.bias")


def _as_batch(x: torch.Tensor, dim: int) -> torch.Tensor:
    x = torch.as_tensor(x, dtype=DTYPE)
    if x.ndim == 1:
        x = x.unsqueeze(0)
    if x.shape[-1] != dim:
        raise InputError(f"expected inputs of width {dim}, got {x.shape[-1]}")
    return x


def linear_predict(params: LinearGaussianParams, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
    """
    Evaluate y_hat = sum_i (b_i + |s_i| e_i) x_i + (b_0 + |s_0| e_0).

    Args:
        params: Linear model parameters
        x: (B, n) or (n,) inputs
        noise: Draw with block ``coef.eps`` of shape (B, n + 1); may be empty
            for a deterministic model

    Returns:
        (B,) predictions
    """
    x = _as_batch(x, params.spec.input_dim)
    coef = params.means.expand(x.shape[0], -1)
    if params.spec.stochastic:
        eps = noise["coef.eps"]
        if eps.shape != (x.shape[0], params.spec.input_dim + 1):
            raise InputError(f"noise shape {tuple(eps.shape)} does not match batch {x.shape[0]}")
        coef = coef + params.spreads.abs() * eps
    return (coef[:, 1:] * x).sum(dim=-1) + coef[:, 0]


def mlp_predict(params: StochasticMlpParams, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
    """
    Forward pass with sampled weights w = a + |sigma| * eps.

    Hidden layers use ReLU; the output layer is linear. In resnet mode each
    hidden layer after the first adds its input to its activation.

    Args:
        params: Network parameters
        x: (B, n_in) inputs, one weight sample per row; or (B, P, n_in) to
            evaluate each of B weight samples at P points
        noise: Draw with blocks ``layer{k}.eps`` of shape (B, fan_out, fan_in)

    Returns:
        (B, n_out) or (B, P, n_out) outputs
    """
    spec = params.spec
    h = _as_batch(x, spec.widths[0])
    last = len(spec.layers) - 1
    for k in range(len(spec.layers)):
        weight = params.mean(k)
        spread = params.spread(k)
        if spread is not None:
            eps = noise[f"layer{k}.eps"]
            if eps.shape[0] != h.shape[0] or eps.shape[1:] != weight.shape:
                raise InputError(
                    f"noise block layer{k} has shape {tuple(eps.shape)}, "
                    f"expected ({h.shape[0]}, {weight.shape[0]}, {weight.shape[1]})"
                )
            sampled = weight + spread.abs() * eps
            out = torch.einsum("boi,b...i->b...o", sampled, h) + params.bias(k)
        else:
            out = h @ weight.T + params.bias(k)

        if k == last:
            h = out
        elif spec.resnet and k > 0:
            h = torch.relu(out) + h
        else:
            h = torch.relu(out)
    return h


class StochasticModel(ABC):
    """Common surface used by the trainer."""

    spec: ModelSpec

    @property
    @abstractmethod
    def layout(self) -> Layout:
        """Parameter blocks."""

    @abstractmethod
    def predict(self, vector: ParamVector, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
        """(B, d) outputs for (B, n) inputs."""

    @abstractmethod
    def sample_noise(self, batch: int, generator: torch.Generator) -> NoiseDraw:
        """A fresh draw for ``batch`` independent weight samples."""

    def init_params(self, generator: torch.Generator) -> ParamVector:
        return init_params(self.spec, generator).vector

    def sample_outputs(
        self, vector: ParamVector, inputs: ArrayLike, generator: torch.Generator
    ) -> np.ndarray:
        """(N, d) outputs, one fresh weight sample per input row."""
        x = torch.as_tensor(np.asarray(inputs, dtype=np.float64))
        if x.ndim == 1:
            x = x.unsqueeze(-1)
        noise = self.sample_noise(x.shape[0], generator)
        with torch.no_grad():
            return self.predict(vector, x, noise).numpy()

    def draws_at(
        self, vector: ParamVector, points: ArrayLike, draws: int, generator: torch.Generator
    ) -> np.ndarray:
        """(P, draws) scalar outputs, ``draws`` independent weight samples at each point."""
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        outputs = self.sample_outputs(vector, np.repeat(x, draws, axis=0), generator)
        return outputs[:, 0].reshape(x.shape[0], draws)


class LinearGaussianModel(StochasticModel):
    def __init__(self, spec: LinearSpec):
        self.spec = spec

    @property
    def layout(self) -> Layout:
        return LinearGaussianParams.layout(self.spec)

    def predict(self, vector: ParamVector, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
        return linear_predict(LinearGaussianParams(self.spec, vector), x, noise).unsqueeze(-1)

    def sample_noise(self, batch: int, generator: torch.Generator) -> NoiseDraw:
        if not self.spec.stochastic:
            return NoiseDraw(batch=batch)
        eps = torch.randn(batch, self.spec.input_dim + 1, dtype=DTYPE, generator=generator)
        return NoiseDraw({"coef.eps": eps}, batch=batch)


class StochasticMlp(StochasticModel):
    def __init__(self, spec: MlpSpec):
        self.spec = spec

    @property
    def layout(self) -> Layout:
        return StochasticMlpParams.layout(self.spec)

    def predict(self, vector: ParamVector, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
        return mlp_predict(StochasticMlpParams(self.spec, vector), x, noise)

    def sample_noise(self, batch: int, generator: torch.Generator) -> NoiseDraw:
        if not self.spec.stochastic:
            return NoiseDraw(batch=batch)
        blocks = {
            f"layer{k}.eps": torch.randn(batch, fan_out, fan_in, dtype=DTYPE, generator=generator)
            for k, (fan_in, fan_out) in enumerate(self.spec.layers)
        }
        return NoiseDraw(blocks, batch=batch)


def init_params(
    spec: ModelSpec, generator: Optional[torch.Generator] = None
) -> Union[LinearGaussianParams, StochasticMlpParams]:
    """
    Initial parameters per model family.

    Linear models start with every mean and spread at 1; network entries are
    drawn i.i.d. from N(0, 1e-4).
    """
    if isinstance(spec, LinearSpec):
        vector = ParamVector(LinearGaussianParams.layout(spec))
        vector.values = torch.ones(len(vector), dtype=DTYPE)
        return LinearGaussianParams(spec, vector)
    if isinstance(spec, MlpSpec):
        vector = ParamVector(StochasticMlpParams.layout(spec))
        vector.values = MLP_INIT_SD * torch.randn(len(vector), dtype=DTYPE, generator=generator)
        return StochasticMlpParams(spec, vector)
    raise InputError(f"unknown model spec {type(spec).__name__}")


def build_model(spec: ModelSpec) -> StochasticModel:
    if isinstance(spec, LinearSpec):
        return LinearGaussianModel(spec)
    return StochasticMlp(spec)
