"""Simplicial convolution: lower/upper Laplacian filter banks plus a residual."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch


class Nonlinearity(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    def __call__(self, x: Tensor) -> Tensor:
        if self is Nonlinearity.RELU:
            return ad.relu(x)
        if self is Nonlinearity.TANH:
            return ad.tanh(x)
        return x


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class ScnpLayerParams:
    """Filter weights of one layer.

    ``D[p-1]`` multiplies ``Ld^p X`` and ``U[p-1]`` multiplies ``Lu^p X``;
    ``H`` is the residual weight. All are ``G x F`` arrays.
    """

    D: list[np.ndarray]
    U: list[np.ndarray]
    H: np.ndarray
    nonlinearity: Nonlinearity = Nonlinearity.RELU

    def __post_init__(self):
        self.nonlinearity = Nonlinearity(self.nonlinearity)
        shape = self.H.shape
        if self.H.ndim != 2:
            raise ShapeMismatch(f"H must be 2-D, got {shape}")
        for w in [*self.D, *self.U]:
            if w.shape != shape:
                raise ShapeMismatch(f"filter weight {w.shape} does not match H {shape}")

    @property
    def in_channels(self) -> int:
        return self.H.shape[0]

    @property
    def out_channels(self) -> int:
        return self.H.shape[1]

    @property
    def order_down(self) -> int:
        return len(self.D)

    @property
    def order_up(self) -> int:
        return len(self.U)

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        in_channels: int,
        out_channels: int,
        order_down: int = 1,
        order_up: int = 1,
        nonlinearity: Nonlinearity | str = Nonlinearity.RELU,
    ) -> "ScnpLayerParams":
        g = lambda: glorot(rng, in_channels, out_channels)  # noqa: E731
        return cls(
            D=[g() for _ in range(order_down)],
            U=[g() for _ in range(order_up)],
            H=g(),
            nonlinearity=nonlinearity,
        )

    def named(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.D{p + 1}": w for p, w in enumerate(self.D)}
        out.update({f"{prefix}.U{p + 1}": w for p, w in enumerate(self.U)})
        out[f"{prefix}.H"] = self.H
        return out


def as_tensor(tape: ad.Tape, x) -> Tensor:
    """Lift a weight array onto the tape as a differentiable leaf."""
    if isinstance(x, Tensor):
        return x
    return tape.param(x)


def _filter_bank(L: Tensor, X: Tensor, weights, tape) -> Tensor | None:
    total = None
    shifted = X
    for w in weights:
        shifted = ad.matmul(L, shifted)
        term = ad.matmul(shifted, as_tensor(tape, w))
        total = term if total is None else ad.add(total, term)
    return total


def scn_components(X: Tensor, Ld, Lu, params: ScnpLayerParams) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(Z_d, Z_u, Z_h)``.

    ``Z_d = sum_p Ld^p X D_p`` and ``Z_u = sum_p Lu^p X U_p`` for
    ``p = 1..J``; ``Z_h = X H``. Powers are applied to ``X`` by repeated
    multiplication, never formed explicitly. An empty filter bank yields a
    zero constant.
    """
    tape = X.tape
    E, G = X.shape
    if G != params.in_channels:
        raise ShapeMismatch(f"signal has {G} channels, layer expects {params.in_channels}")
    Ld = Ld if isinstance(Ld, Tensor) else tape.constant(Ld)
    Lu = Lu if isinstance(Lu, Tensor) else tape.constant(Lu)
    if Ld.shape != (E, E) or Lu.shape != (E, E):
        raise ShapeMismatch(f"Laplacians {Ld.shape}/{Lu.shape} do not match {E} edges")
    zeros = lambda: tape.constant(np.zeros((E, params.out_channels)))  # noqa: E731
    Zd = _filter_bank(Ld, X, params.D, tape) or zeros()
    Zu = _filter_bank(Lu, X, params.U, tape) or zeros()
    Zh = ad.matmul(X, as_tensor(tape, params.H))
    return Zd, Zu, Zh
