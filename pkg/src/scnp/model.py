"""SCNP layer, readout and the jumping-knowledge hierarchical classifier."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .complex import SimplicialComplex
from .conv import Nonlinearity, ScnpLayerParams, as_tensor, glorot, scn_components
from .errors import DegenerateComplex, EmptySignal, UnreadableFile
from .pooling import (
    Aggregation,
    PoolingConfig,
    Strategy,
    aggregate,
    pool_max,
    pool_random,
    pool_selfatt,
    pool_septopk,
    pool_topk,
)

__all__ = [
    "scnp_layer_forward",
    "readout",
    "JkModelConfig",
    "JkModel",
    "jk_forward",
    "save_model",
    "load_model",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = "SCNP1"


def scnp_layer_forward(
    complex: SimplicialComplex,
    X,
    params: ScnpLayerParams,
    pooling: PoolingConfig | None = None,
    rng=None,
):
    """One convolution + pooling stage.

    Returns ``(complex', Y, kept)`` with ``Y = sigma(P(Z_d + Z_u + Z_h))``;
    the nonlinearity is applied after pooling. ``X`` may be a tensor or an
    array (lifted as a constant onto a fresh tape).
    """
    if not isinstance(X, Tensor):
        X = Tape().constant(X)
    pooling = pooling or PoolingConfig()
    tape = X.tape
    Ld, Lu = tape.constant(complex.lower_laplacian), tape.constant(complex.upper_laplacian)
    Zd, Zu, Zh = scn_components(X, Ld, Lu, params)
    strategy = pooling.strategy

    if strategy is Strategy.NONE:
        Z = ad.add(ad.add(Zd, Zu), Zh)
        return complex, params.nonlinearity(Z), np.arange(complex.num_edges)

    if strategy is Strategy.SEPTOPK:
        agg = [aggregate(complex, c, pooling.aggregation) for c in (Zd, Zu, Zh)]
        out = pool_septopk(complex, *agg, pooling.ratio, pooling.p_d, pooling.p_u, pooling.p_h)
    else:
        Zt = aggregate(complex, ad.add(ad.add(Zd, Zu), Zh), pooling.aggregation)
        if strategy is Strategy.MAX:
            out = pool_max(complex, Zt, pooling.ratio)
        elif strategy is Strategy.TOPK:
            out = pool_topk(complex, Zt, pooling.ratio, pooling.p)
        elif strategy is Strategy.SELFATT:
            out = pool_selfatt(complex, Zt, pooling.ratio, pooling.score, Ld, Lu)
        else:
            out = pool_random(complex, Zt, pooling.ratio, rng)
    return out.complex, params.nonlinearity(out.Z), out.kept


def readout(Z: Tensor) -> Tensor:
    """``(E, F) -> (1, 2F)``: column means followed by column maxima."""
    if Z.shape[0] == 0:
        raise EmptySignal("readout of an empty edge set")
    return ad.concat_cols(ad.mean_cols(Z), ad.max_cols(Z))


@dataclass
class JkModelConfig:
    """Architecture of the hierarchical classifier.

    Every layer has ``hidden`` output channels so the per-layer readouts can
    be summed. ``mlp_hidden=None`` means one hidden layer of width
    ``2 * hidden``.
    """

    in_channels: int
    num_classes: int
    hidden: int = 16
    num_layers: int = 2
    order_down: int = 1
    order_up: int = 1
    strategy: Strategy = Strategy.SEPTOPK
    ratio: float = 0.7
    aggregation: Aggregation = Aggregation.MEAN
    nonlinearity: Nonlinearity = Nonlinearity.RELU
    mlp_hidden: tuple[int, ...] | None = None
    score_order: int = 1

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.aggregation = Aggregation(self.aggregation)
        self.nonlinearity = Nonlinearity(self.nonlinearity)
        if self.mlp_hidden is None:
            self.mlp_hidden = (2 * self.hidden,)
        self.mlp_hidden = tuple(int(h) for h in self.mlp_hidden)
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.order_down < 0 or self.order_up < 0:
            raise ValueError("filter orders must be >= 0")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"pooling ratio must lie in (0, 1], got {self.ratio}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("strategy", "aggregation", "nonlinearity"):
            d[k] = d[k].value
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "JkModelConfig":
        d = dict(d)
        if d.get("mlp_hidden") is not None:
            d["mlp_hidden"] = tuple(d["mlp_hidden"])
        return cls(**d)


@dataclass
class JkModel:
    config: JkModelConfig
    layers: list[ScnpLayerParams]
    pools: list[PoolingConfig]
    mlp: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @classmethod
    def init(cls, config: JkModelConfig, seed=0) -> "JkModel":
        rng = np.random.default_rng(seed)
        layers, pools = [], []
        width = config.in_channels
        for _ in range(config.num_layers):
            layers.append(
                ScnpLayerParams.init(
                    rng, width, config.hidden, config.order_down, config.order_up, config.nonlinearity
                )
            )
            pools.append(
                PoolingConfig.init(
                    config.strategy, config.hidden, rng, config.ratio, config.aggregation, config.score_order
                )
            )
            width = config.hidden
        mlp = []
        widths = [2 * config.hidden, *config.mlp_hidden, config.num_classes]
        for a, b in zip(widths[:-1], widths[1:]):
            mlp.append((glorot(rng, a, b), np.zeros((1, b))))
        return cls(config, layers, pools, mlp)

    def named_parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (layer, pool) in enumerate(zip(self.layers, self.pools)):
            out.update(layer.named(f"layer{l}"))
            out.update(pool.named(f"layer{l}.pool"))
        for i, (W, b) in enumerate(self.mlp):
            out[f"mlp{i}.W"] = W
            out[f"mlp{i}.b"] = b
        return out

    def layer_parameter_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, value in self.named_parameters().items():
            group = name.split(".")[0]
            counts[group] = counts.get(group, 0) + value.size
        return counts

    def copy(self) -> "JkModel":
        clone = load_model_from_arrays(self.config, {k: v.copy() for k, v in self.named_parameters().items()})
        return clone

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in self.named_parameters().items():
            value[...] = state[name]


def mlp_head(model: JkModel, embedding: Tensor) -> Tensor:
    h = embedding
    tape = embedding.tape
    for i, (W, b) in enumerate(model.mlp):
        h = ad.add(ad.matmul(h, as_tensor(tape, W)), as_tensor(tape, b))
        if i < len(model.mlp) - 1:
            h = ad.relu(h)
    return h


def jk_forward(model: JkModel, complex: SimplicialComplex, X, tape: Tape | None = None, rng=None) -> Tensor:
    """Class logits ``(1, C)`` for one sample.

    Each layer's pooled output is read out into a ``2F`` vector; the vectors
    are summed into a global embedding that feeds the MLP head.
    """
    tape = Tape() if tape is None else tape
    x = X if isinstance(X, Tensor) else tape.constant(X)
    if model.config.strategy is Strategy.RANDOM:
        rng = np.random.default_rng(0 if rng is None else rng)
    embedding = None
    current = complex
    for layer, pool in zip(model.layers, model.pools):
        current, x, _ = scnp_layer_forward(current, x, layer, pool, rng)
        if current.num_edges == 0:
            raise DegenerateComplex("pooling emptied the edge set")
        r = readout(x)
        embedding = r if embedding is None else ad.add(embedding, r)
    return mlp_head(model, embedding)


# -- checkpoints -------------------------------------------------------------


def load_model_from_arrays(config: JkModelConfig, arrays: dict[str, np.ndarray]) -> JkModel:
    model = JkModel.init(config, seed=0)
    params = model.named_parameters()
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise ValueError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, value in params.items():
        if arrays[name].shape != value.shape:
            raise ValueError(f"parameter {name} has shape {arrays[name].shape}, expected {value.shape}")
        value[...] = arrays[name]
    return model


def save_model(model: JkModel, path) -> None:
    """Plain-text checkpoint: magic line, config JSON, then named matrices."""
    lines = [CHECKPOINT_MAGIC, "config " + json.dumps(model.config.to_dict(), sort_keys=True)]
    for name, value in model.named_parameters().items():
        lines.append(f"param {name} {value.shape[0]} {value.shape[1]}")
        lines += [" ".join(repr(float(x)) for x in row) for row in value]
    Path(path).write_text("\n".join(lines) + "\n")


def is_checkpoint(path) -> bool:
    try:
        with open(path) as fh:
            return fh.readline().strip() == CHECKPOINT_MAGIC
    except (OSError, UnicodeDecodeError):
        return False


def load_model(path) -> JkModel:
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise UnreadableFile(f"{path}: missing {CHECKPOINT_MAGIC} header")
    if len(lines) < 2 or not lines[1].startswith("config "):
        raise UnreadableFile(f"{path}: missing config line")
    config = JkModelConfig.from_dict(json.loads(lines[1][len("config "):]))
    arrays = {}
    i = 2
    while i < len(lines):
        tokens = lines[i].split()
        i += 1
        if not tokens:
            continue
        if tokens[0] != "param" or len(tokens) != 4:
            raise UnreadableFile(f"{path}:{i}: expected 'param <name> <rows> <cols>'")
        name, rows, cols = tokens[1], int(tokens[2]), int(tokens[3])
        block = [list(map(float, lines[i + r].split())) for r in range(rows)]
        i += rows
        value = np.array(block, dtype=np.float64).reshape(rows, cols)
        arrays[name] = value
    return load_model_from_arrays(config, arrays)
