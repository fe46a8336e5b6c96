"""Reverse-mode differentiation over a flat named parameter vector.

The tape is torch's autograd graph; while tracing, every primitive torch call
made by the loss program is also logged with its output and parent links so a
non-finite intermediate can be reported by node.
"""

import logging
import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch
from pydantic import BaseModel, Field
from torch.overrides import TorchFunctionMode

from core.errors import InputError, NumericError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

Layout = list[tuple[str, tuple[int, ...]]]


class ParamVector:
    """Named blocks of parameters stored in one flat float64 tensor."""

    def __init__(self, layout: Layout, values: Optional[torch.Tensor] = None):
        """
        Initialize the vector.

        Args:
            layout: Ordered (block name, block shape) pairs
            values: Flat values; zeros when omitted
        """
        names = [name for name, _ in layout]
        if len(set(names)) != len(names):
            raise InputError(f"parameter block names must be unique: {names}")

        self._layout: Layout = [(name, tuple(shape)) for name, shape in layout]
        self._offsets: dict[str, tuple[int, int, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in self._layout:
            size = math.prod(shape)
            self._offsets[name] = (offset, offset + size, shape)
            offset += size

        if values is None:
            values = torch.zeros(offset, dtype=DTYPE)
        if values.ndim != 1 or values.numel() != offset:
            raise InputError(f"expected {offset} values, got shape {tuple(values.shape)}")
        self.values = values
        self.grad = torch.zeros(offset, dtype=DTYPE)

    @property
    def layout(self) -> Layout:
        return list(self._layout)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self._layout]

    def __len__(self) -> int:
        return self.values.numel()

    def __contains__(self, name: str) -> bool:
        return name in self._offsets

    def block(self, name: str) -> torch.Tensor:
        """A block reshaped to its declared shape (a differentiable view)."""
        start, stop, shape = self._offsets[name]
        return self.values[start:stop].view(shape)

    def set_block(self, name: str, value: torch.Tensor | np.ndarray | float) -> None:
        start, stop, shape = self._offsets[name]
        with torch.no_grad():
            self.values[start:stop] = torch.as_tensor(value, dtype=DTYPE).expand(shape).reshape(-1)

    def bind(self, values: torch.Tensor) -> "ParamVector":
        """Same layout over another flat tensor (no copy)."""
        return ParamVector(self._layout, values)

    def copy(self) -> "ParamVector":
        clone = ParamVector(self._layout, self.values.detach().clone())
        clone.grad = self.grad.detach().clone()
        return clone

    def check_finite(self) -> None:
        if not torch.isfinite(self.values).all():
            raise NumericError("parameter vector has non-finite values")

    def entry_names(self) -> list[str]:
        """One name per scalar entry, e.g. ``layer0.mean[2,1]``."""
        names: list[str] = []
        for name, shape in self._layout:
            for position in np.ndindex(*shape):
                names.append(f"{name}[{','.join(str(i) for i in position)}]")
        return names

    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.entry_names(), self.values.detach().tolist()))

    @classmethod
    def from_entries(cls, layout: Layout, entries: Iterable[tuple[str, float]]) -> "ParamVector":
        """Rebuild a vector from (entry name, value) pairs."""
        vector = cls(layout)
        lookup = dict(entries)
        missing = [name for name in vector.entry_names() if name not in lookup]
        if missing:
            raise InputError(f"missing parameter entries: {missing[:5]}")
        vector.values = torch.tensor(
            [lookup[name] for name in vector.entry_names()], dtype=DTYPE
        )
        return vector


Program = Callable[[ParamVector], torch.Tensor]


class TapeNode:
    """One recorded primitive operation."""

    def __init__(self, index: int, op: str, value: torch.Tensor, parents: tuple[int, ...]):
        self.index = index
        self.op = op
        self.value = value
        self.parents = parents

    def __repr__(self) -> str:
        return f"TapeNode({self.index}, {self.op}, shape={tuple(self.value.shape)}, parents={self.parents})"


class _Recorder(TorchFunctionMode):
    """Logs torch calls and rejects non-finite floating outputs."""

    def __init__(self, record: bool = True):
        super().__init__()
        self.record = record
        self.nodes: list[TapeNode] = []
        self._ids: dict[int, int] = {}
        self._live: list[torch.Tensor] = []

    def __torch_function__(self, func, types, args=(), kwargs=None):
        kwargs = kwargs or {}
        out = func(*args, **kwargs)
        outputs = out if isinstance(out, (tuple, list)) else (out,)
        tensors = [t for t in outputs if isinstance(t, torch.Tensor) and t.is_floating_point()]
        if not tensors:
            return out

        op = getattr(func, "__name__", repr(func))
        for tensor in tensors:
            if not torch.isfinite(tensor).all():
                raise NumericError(f"non-finite value produced by '{op}'", where=f"node {len(self.nodes)}")

        if self.record:
            parents = tuple(
                self._ids[id(arg)]
                for arg in list(args) + list(kwargs.values())
                if isinstance(arg, torch.Tensor) and id(arg) in self._ids
            )
            for tensor in tensors:
                index = len(self.nodes)
                self.nodes.append(TapeNode(index, op, tensor.detach(), parents))
                self._ids[id(tensor)] = index
                self._live.append(tensor)
        return out


class Tape:
    """Forward record of one loss evaluation, ready for a reverse sweep."""

    def __init__(
        self,
        root: torch.Tensor,
        leaf: torch.Tensor,
        nodes: list[TapeNode],
        program: Program,
        params: ParamVector,
    ):
        self.root = root
        self.leaf = leaf
        self.nodes = nodes
        self._program = program
        self._params = params

    @property
    def value(self) -> float:
        return float(self.root.detach().sum())

    def replay(self) -> float:
        """Re-run the program on the recorded parameter values."""
        with torch.no_grad():
            root = self._program(self._params.bind(self.leaf.detach().clone()))
        return float(torch.as_tensor(root).detach().sum())


def forward_eval(program: Program, params: ParamVector, trace: bool = True) -> tuple[float, Tape]:
    """
    Evaluate a loss program and keep the tape for a reverse sweep.

    Noise and any other randomness must be frozen inside ``program``.

    Args:
        program: Maps a ParamVector to a scalar tensor
        params: Point of evaluation (not modified)
        trace: Record every primitive op; when False only the root is checked

    Returns:
        (root value, Tape); a non-scalar root reports its sum
    """
    leaf = params.values.detach().clone().requires_grad_(True)
    bound = params.bind(leaf)
    recorder = _Recorder(record=trace)
    if trace:
        with recorder:
            root = program(bound)
    else:
        root = program(bound)

    root = torch.as_tensor(root, dtype=DTYPE)
    if not torch.isfinite(root).all():
        raise NumericError("loss program returned a non-finite value", where="root")

    tape = Tape(root, leaf, recorder.nodes, program, params.copy())
    return tape.value, tape


def backward(tape: Tape, params: Optional[ParamVector] = None) -> torch.Tensor:
    """
    Reverse sweep from the tape root.

    Args:
        tape: Tape produced by forward_eval
        params: When given, the gradient is written into ``params.grad``

    Returns:
        Flat gradient of the root w.r.t. every parameter
    """
    if tape.root.numel() != 1:
        raise InputError(f"backward needs a scalar root, got shape {tuple(tape.root.shape)}")

    if tape.root.requires_grad:
        (grad,) = torch.autograd.grad(tape.root, tape.leaf, allow_unused=True)
    else:
        grad = None
    if grad is None:
        grad = torch.zeros_like(tape.leaf)
    grad = grad.detach()

    if params is not None:
        params.grad = grad.clone()
    return grad


class GradientCheckReport(BaseModel):
    """Comparison of the reverse sweep against central differences."""

    max_rel_error: float = Field(ge=0.0)
    passed: bool
    worst_entry: str = ""
    checked: int = 0


def gradient_check(
    program: Program,
    params: ParamVector,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    coordinates: Optional[Sequence[int]] = None,
) -> GradientCheckReport:
    """
    Compare reverse-mode gradients with central finite differences.

    Coordinates whose gradient is negligible next to the largest one are
    compared on 1e-3 of the largest magnitude instead of their own.

    Args:
        program: Deterministic loss program
        params: Point of evaluation
        step: Finite-difference step in [1e-6, 1e-3]
        tolerance: Largest accepted relative error
        coordinates: Entries to check (all by default)

    Returns:
        GradientCheckReport with the worst relative error
    """
    if not 1e-6 <= step <= 1e-3:
        raise InputError(f"finite-difference step must lie in [1e-6, 1e-3], got {step}")

    first, tape = forward_eval(program, params, trace=False)
    second = tape.replay()
    if first != second:
        raise InputError(f"program is not deterministic: {first!r} != {second!r}")
    autodiff = backward(tape).numpy()

    base = params.values.detach().clone()
    indices = range(len(params)) if coordinates is None else list(coordinates)
    finite_diff = np.zeros(len(params))
    with torch.no_grad():
        for i in indices:
            shifted = base.clone()
            shifted[i] += step
            upper = float(torch.as_tensor(program(params.bind(shifted))).sum())
            shifted[i] -= 2 * step
            lower = float(torch.as_tensor(program(params.bind(shifted))).sum())
            finite_diff[i] = (upper - lower) / (2 * step)

    chosen = np.asarray(list(indices), dtype=np.int64)
    ad, fd = autodiff[chosen], finite_diff[chosen]
    floor = max(1e-3 * float(np.max(np.abs(fd), initial=0.0)), 1e-12)
    rel = np.abs(ad - fd) / np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
    worst = int(np.argmax(rel)) if rel.size else 0
    max_rel = float(rel[worst]) if rel.size else 0.0

    names = params.entry_names()
    report = GradientCheckReport(
        max_rel_error=max_rel,
        passed=max_rel <= tolerance,
        worst_entry=names[chosen[worst]] if rel.size else "",
        checked=int(chosen.size),
    )
    logger.debug(f"Gradient check: max rel error {max_rel:.3e} at {report.worst_entry}")
    return report
