"""Simplicial pooling as aggregation, then selection, then reduction.

Aggregation summarizes each edge's closed neighbourhood (the edge, its
lower neighbours and its upper neighbours). Selection keeps
``max(1, floor(r * E))`` edges. Reduction restricts the signal to the kept
edges and drops every triangle that lost a boundary edge.

Index selection is discrete and not differentiated. Learnable score
parameters receive gradient only through the ``tanh`` gate that rescales
the kept rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .complex import SimplicialComplex, reduce_complex
from .conv import Nonlinearity, ScnpLayerParams, as_tensor, glorot, scn_components
from .errors import ShapeMismatch, ZeroProjectionVector

__all__ = [
    "Strategy",
    "Aggregation",
    "PoolingConfig",
    "PoolOutput",
    "aggregate",
    "select_count",
    "top_indices",
    "pool_max",
    "pool_topk",
    "pool_selfatt",
    "pool_septopk",
    "pool_random",
]


class Strategy(str, Enum):
    NONE = "none"
    RANDOM = "random"
    MAX = "max"
    TOPK = "topk"
    SELFATT = "selfatt"
    SEPTOPK = "septopk"


class Aggregation(str, Enum):
    MEAN = "mean"
    MAX = "max"


@dataclass
class PoolingConfig:
    """Pooling hyperparameters and the learnables the strategy needs.

    ``p``, ``p_d``, ``p_u`` and ``p_h`` are ``F x 1`` arrays; ``score`` is the
    one-output scoring layer of self-attention pooling.
    """

    strategy: Strategy = Strategy.NONE
    ratio: float = 0.7
    aggregation: Aggregation = Aggregation.MEAN
    p: np.ndarray | None = None
    p_d: np.ndarray | None = None
    p_u: np.ndarray | None = None
    p_h: np.ndarray | None = None
    score: ScnpLayerParams | None = None

    _needs = {
        Strategy.TOPK: ("p",),
        Strategy.SEPTOPK: ("p_d", "p_u", "p_h"),
        Strategy.SELFATT: ("score",),
    }

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.aggregation = Aggregation(self.aggregation)
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"pooling ratio must lie in (0, 1], got {self.ratio}")
        needed = self._needs.get(self.strategy, ())
        for name in ("p", "p_d", "p_u", "p_h", "score"):
            present = getattr(self, name) is not None
            if present != (name in needed):
                state = "requires" if name in needed else "does not take"
                raise ValueError(f"strategy {self.strategy.value} {state} '{name}'")

    @classmethod
    def init(
        cls,
        strategy: Strategy | str,
        channels: int,
        rng: np.random.Generator,
        ratio: float = 0.7,
        aggregation: Aggregation | str = Aggregation.MEAN,
        score_order: int = 1,
    ) -> "PoolingConfig":
        strategy = Strategy(strategy)
        kw = {}
        if strategy is Strategy.TOPK:
            kw["p"] = glorot(rng, channels, 1)
        elif strategy is Strategy.SEPTOPK:
            kw.update(p_d=glorot(rng, channels, 1), p_u=glorot(rng, channels, 1), p_h=glorot(rng, channels, 1))
        elif strategy is Strategy.SELFATT:
            kw["score"] = ScnpLayerParams.init(
                rng, channels, 1, score_order, score_order, Nonlinearity.IDENTITY
            )
        return cls(strategy, ratio, aggregation, **kw)

    def named(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name in ("p", "p_d", "p_u", "p_h"):
            value = getattr(self, name)
            if value is not None:
                out[f"{prefix}.{name}"] = value
        if self.score is not None:
            out.update(self.score.named(f"{prefix}.score"))
        return out


@dataclass
class PoolOutput:
    complex: SimplicialComplex
    Z: Tensor
    kept: np.ndarray
    scores: np.ndarray


def aggregate(complex: SimplicialComplex, Z: Tensor, mode: Aggregation | str = Aggregation.MEAN) -> Tensor:
    """Feature-wise mean or max over each edge's closed neighbourhood."""
    if Z.shape[0] != complex.num_edges:
        raise ShapeMismatch(f"signal has {Z.shape[0]} rows, complex has {complex.num_edges} edges")
    if Aggregation(mode) is Aggregation.MEAN:
        return ad.matmul(Z.tape.constant(complex.mean_aggregator), Z)
    return ad.neighborhood_max(Z, complex.neighborhood_index)


def select_count(E: int, r: float) -> int:
    # The small offset keeps products like 0.29 * 100 from flooring to 28.
    return max(1, math.floor(r * E + 1e-9))


def top_indices(y, k: int, tiebreak=None) -> np.ndarray:
    """Indices of the ``k`` largest scores, returned ascending.

    Ties go to the lower index, or to the lower ``tiebreak`` key when one is
    given.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if tiebreak is None:
        order = np.argsort(-y, kind="stable")
    else:
        order = np.lexsort((np.arange(y.size), np.asarray(tiebreak).reshape(-1), -y))
    return np.sort(order[:k])


def _select(complex: SimplicialComplex, y, r: float) -> np.ndarray:
    # Tied edges (e.g. equal closed neighbourhoods under MEAN) are resolved by
    # their vertex pair, which for lexicographically ordered complexes is the
    # index order and does not depend on how the edges are numbered.
    e = complex.edges
    key = e[:, 0] * np.int64(max(complex.vertex_count, 1)) + e[:, 1]
    return top_indices(y, select_count(complex.num_edges, r), key)


def _gate(Zt: Tensor, y: Tensor, kept: np.ndarray) -> Tensor:
    # [Zt ⊙ tanh(y 1^T)] restricted to kept rows; restricting first is equivalent.
    gate = ad.broadcast_col(ad.tanh(ad.row_gather(y, kept)), Zt.shape[1])
    return ad.hadamard(ad.row_gather(Zt, kept), gate)


def _projection_score(Zt: Tensor, p) -> Tensor:
    pt = as_tensor(Zt.tape, p)
    if pt.shape != (Zt.shape[1], 1):
        raise ShapeMismatch(f"projection vector {pt.shape} does not match {Zt.shape[1]} channels")
    norm = ad.l2_norm(pt)
    if norm.value[0, 0] < 1e-12:
        raise ZeroProjectionVector("projection vector has (near) zero norm")
    return ad.divide_by_scalar(ad.matmul(Zt, pt), norm)


def pool_max(complex: SimplicialComplex, Zt: Tensor, r: float) -> PoolOutput:
    y = np.abs(Zt.value.sum(axis=1))
    kept = _select(complex, y, r)
    return PoolOutput(reduce_complex(complex, kept), ad.row_gather(Zt, kept), kept, y)


def pool_topk(complex: SimplicialComplex, Zt: Tensor, r: float, p) -> PoolOutput:
    y = _projection_score(Zt, p)
    kept = _select(complex, y.value[:, 0], r)
    return PoolOutput(reduce_complex(complex, kept), _gate(Zt, y, kept), kept, y.value[:, 0].copy())


def pool_selfatt(
    complex: SimplicialComplex, Zt: Tensor, r: float, score_params: ScnpLayerParams, Ld=None, Lu=None
) -> PoolOutput:
    if score_params.out_channels != 1:
        raise ShapeMismatch(f"scoring layer must have one output, has {score_params.out_channels}")
    if Ld is None or Lu is None:
        Ld, Lu = complex.lower_laplacian, complex.upper_laplacian
    Zd, Zu, Zh = scn_components(Zt, Ld, Lu, score_params)
    y = score_params.nonlinearity(ad.add(ad.add(Zd, Zu), Zh))
    kept = _select(complex, y.value[:, 0], r)
    return PoolOutput(reduce_complex(complex, kept), _gate(Zt, y, kept), kept, y.value[:, 0].copy())


def pool_septopk(
    complex: SimplicialComplex, Zd: Tensor, Zu: Tensor, Zh: Tensor, r: float, p_d, p_u, p_h
) -> PoolOutput:
    yd = _projection_score(Zd, p_d)
    yu = _projection_score(Zu, p_u)
    yh = _projection_score(Zh, p_h)
    total = yd.value[:, 0] + yu.value[:, 0] + yh.value[:, 0]
    kept = _select(complex, total, r)
    Z = ad.add(ad.add(_gate(Zd, yd, kept), _gate(Zu, yu, kept)), _gate(Zh, yh, kept))
    return PoolOutput(reduce_complex(complex, kept), Z, kept, total)


def pool_random(complex: SimplicialComplex, Zt: Tensor, r: float, rng) -> PoolOutput:
    """Uniformly random selection; ``rng`` is a seed or a ``numpy`` Generator."""
    rng = np.random.default_rng(rng)
    E = complex.num_edges
    kept = np.sort(rng.choice(E, size=select_count(E, r), replace=False))
    return PoolOutput(reduce_complex(complex, kept), ad.row_gather(Zt, kept), kept, np.zeros(E))
