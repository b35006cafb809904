"""Edge-flow datasets: synthetic trajectories, TUDataset graphs, serialization.

Synthetic flows
---------------
Points are drawn uniformly in the unit square (the four corners are always
included) and Delaunay-triangulated. Vertices inside the disk-shaped holes
are deleted together with every simplex touching them. The holes sit on the
diagonal from the bottom-left to the top-right corner; class-0 trajectories
run between those corners through the upper-left half (above the holes),
class-1 trajectories through the lower-right half (below them).

Vertices are numbered by polar angle around the centre of the square,
starting from the bottom-left corner, so the reference orientation of an
edge (lower to higher index) points counterclockwise. Going above the holes
is then mostly a clockwise journey and going below mostly counterclockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np
from scipy.spatial import Delaunay

from .complex import (
    SimplicialComplex,
    build_complex,
    clique_lift,
    format_complex,
    numbered_lines,
    parse_complex,
)
from .errors import (
    DegenerateMesh,
    EmptySplit,
    InconsistentIndicator,
    MalformedLine,
    MissingFile,
    UnreadableFile,
)

__all__ = [
    "Sample",
    "TUGraph",
    "SyntheticFlowConfig",
    "FlowMesh",
    "build_flow_mesh",
    "trajectory_to_flow",
    "generate_synthetic_flow",
    "load_tudataset",
    "bundled_corpus",
    "lift_and_featurize",
    "split",
    "save_dataset",
    "load_dataset",
]


@dataclass
class Sample:
    complex: SimplicialComplex
    X: np.ndarray
    label: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        if self.X.shape[0] != self.complex.num_edges:
            raise ValueError(
                f"signal has {self.X.shape[0]} rows but the complex has {self.complex.num_edges} edges"
            )
        self.label = int(self.label)


@dataclass
class TUGraph:
    vertex_count: int
    edges: list[tuple[int, int]]
    node_features: np.ndarray
    label: int


# -- synthetic flow ------------------------------------------------------------


@dataclass
class SyntheticFlowConfig:
    point_count: int = 120
    hole_count: int = 2
    trajectories_per_class: int = 100
    noise_std: float = 0.0
    seed: int = 0
    hole_radius: float = 0.15

    def __post_init__(self):
        if self.point_count < 10:
            raise ValueError("point_count must be >= 10")
        if self.trajectories_per_class < 1:
            raise ValueError("trajectories_per_class must be >= 1")
        if self.hole_count < 0:
            raise ValueError("hole_count must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass
class FlowMesh:
    complex: SimplicialComplex
    points: np.ndarray
    graph: nx.Graph
    start: int
    end: int


def _hole_centres(count: int) -> np.ndarray:
    t = (np.arange(count) + 1.0) / (count + 1.0)
    return np.stack([t, t], axis=1)


def build_flow_mesh(config: SyntheticFlowConfig) -> FlowMesh:
    """Triangulated unit square with holes; shared by every trajectory."""
    rng = np.random.default_rng(config.seed)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    pts = np.concatenate([corners, rng.uniform(size=(config.point_count - 4, 2))])
    simplices = Delaunay(pts).simplices

    alive = np.ones(len(pts), dtype=bool)
    for c in _hole_centres(config.hole_count):
        alive &= np.linalg.norm(pts - c, axis=1) > config.hole_radius
    if not (alive[0] and alive[3]):
        raise DegenerateMesh("a hole covers the start or end corner")

    # Renumber surviving vertices by angle around the centre, from the bottom-left corner.
    theta = np.arctan2(pts[:, 1] - 0.5, pts[:, 0] - 0.5)
    theta = np.mod(theta - np.arctan2(-0.5, -0.5), 2 * np.pi)
    survivors = np.flatnonzero(alive)
    survivors = survivors[np.lexsort((survivors, theta[survivors]))]
    new_id = np.full(len(pts), -1)
    new_id[survivors] = np.arange(survivors.size)

    edges, tris = set(), set()
    for s in simplices:
        ids = new_id[s]
        a, b, c = s
        for u, v in ((a, b), (a, c), (b, c)):
            if alive[u] and alive[v]:
                edges.add(tuple(sorted((int(new_id[u]), int(new_id[v])))))
        if np.all(ids >= 0):
            tris.add(tuple(sorted(int(i) for i in ids)))
    complex = build_complex(survivors.size, edges, tris)
    points = pts[survivors]

    graph = nx.Graph()
    graph.add_nodes_from(range(complex.vertex_count))
    for i, j in complex.edges:
        graph.add_edge(int(i), int(j), weight=float(np.linalg.norm(points[i] - points[j])))
    start, end = int(new_id[0]), int(new_id[3])
    if not nx.has_path(graph, start, end):
        raise DegenerateMesh("holes disconnect the start and end corners")
    return FlowMesh(complex, points, graph, start, end)


def trajectory_to_flow(complex: SimplicialComplex, path: Sequence[int]) -> np.ndarray:
    """Edge flow of a vertex path: +1 along an edge's orientation, -1 against."""
    index = {(int(i), int(j)): e for e, (i, j) in enumerate(complex.edges)}
    x = np.zeros(complex.num_edges)
    for u, v in zip(path[:-1], path[1:]):
        u, v = int(u), int(v)
        if u < v:
            x[index[(u, v)]] += 1.0
        else:
            x[index[(v, u)]] -= 1.0
    return x


def _loop_erase(path: list[int]) -> list[int]:
    out: list[int] = []
    seen: dict[int, int] = {}
    for v in path:
        if v in seen:
            del out[seen[v] + 1 :]
            seen = {u: k for k, u in enumerate(out)}
        else:
            seen[v] = len(out)
            out.append(v)
    return out


def _nearest(points: np.ndarray, q: np.ndarray, allowed: np.ndarray) -> int:
    d = np.linalg.norm(points[allowed] - q, axis=1)
    return int(allowed[np.argmin(d)])


def generate_synthetic_flow(config: SyntheticFlowConfig) -> list[Sample]:
    """Balanced two-class flow dataset on one shared mesh, classes interleaved."""
    mesh = build_flow_mesh(config)
    rng = np.random.default_rng([config.seed, 1])
    pts = mesh.points
    upper = np.flatnonzero(pts[:, 1] - pts[:, 0] > 0.25)
    lower = np.flatnonzero(pts[:, 0] - pts[:, 1] > 0.25)
    if upper.size == 0 or lower.size == 0:
        raise DegenerateMesh("mesh has no room for waypoints on one side of the holes")

    samples = []
    for _ in range(config.trajectories_per_class):
        for label, region in ((0, upper), (1, lower)):
            a, b = rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)
            target = np.array([a, b]) if label == 0 else np.array([b, a])
            waypoint = _nearest(pts, target, region)
            try:
                leg1 = nx.shortest_path(mesh.graph, mesh.start, waypoint, weight="weight")
                leg2 = nx.shortest_path(mesh.graph, waypoint, mesh.end, weight="weight")
            except nx.NetworkXNoPath:
                raise DegenerateMesh("waypoint unreachable from the corners") from None
            path = _loop_erase(leg1 + leg2[1:])
            x = trajectory_to_flow(mesh.complex, path)
            if config.noise_std > 0:
                x = x + rng.normal(0.0, config.noise_std, size=x.shape)
            samples.append(Sample(mesh.complex, x.reshape(-1, 1), label))
    return samples


# -- TUDataset -------------------------------------------------------------------


def _read_rows(path: Path, parse, required=True):
    if not path.exists():
        if required:
            raise MissingFile(f"missing file {path}")
        return None
    rows = []
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(parse(line))
        except ValueError:
            raise MalformedLine(path, n) from None
    return rows


def _int_pair(line: str) -> tuple[int, int]:
    parts = [p for p in line.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError(line)
    return int(parts[0]), int(parts[1])


def _one_int(line: str) -> int:
    return int(line.strip())


def _floats(line: str) -> list[float]:
    return [float(p) for p in line.replace(",", " ").split()]


def load_tudataset(directory, name: str) -> list[TUGraph]:
    """Parse a TUDataset corpus stored in the standard flat-file layout.

    Node features are the node attributes and the one-hot node labels
    (columns in sorted label order), concatenated when both exist; a single
    constant feature is used when neither file is present. Graph labels are
    remapped to contiguous classes ``0..C-1`` in sorted order.
    """
    d = Path(directory)
    adj = _read_rows(d / f"{name}_A.txt", _int_pair)
    indicator = _read_rows(d / f"{name}_graph_indicator.txt", _one_int)
    graph_labels = _read_rows(d / f"{name}_graph_labels.txt", _one_int)
    node_labels = _read_rows(d / f"{name}_node_labels.txt", _one_int, required=False)
    node_attrs = _read_rows(d / f"{name}_node_attributes.txt", _floats, required=False)

    N = len(indicator)
    ind = np.asarray(indicator, dtype=np.int64)
    G = len(graph_labels)
    if N and (ind.min() < 1 or ind.max() > G):
        raise InconsistentIndicator(f"graph ids must lie in 1..{G}")
    if np.any(np.diff(ind) < 0):
        raise InconsistentIndicator("graph indicator must be non-decreasing")
    if set(ind.tolist()) != set(range(1, G + 1)):
        raise InconsistentIndicator("every graph needs at least one node")
    for what, rows in (("node labels", node_labels), ("node attributes", node_attrs)):
        if rows is not None and len(rows) != N:
            raise InconsistentIndicator(f"{what} have {len(rows)} rows for {N} nodes")

    blocks = []
    if node_attrs is not None:
        widths = {len(r) for r in node_attrs}
        if len(widths) != 1:
            raise MalformedLine(d / f"{name}_node_attributes.txt", -1, "rows have differing widths")
        blocks.append(np.asarray(node_attrs, dtype=np.float64))
    if node_labels is not None:
        values = sorted(set(node_labels))
        col = {v: k for k, v in enumerate(values)}
        onehot = np.zeros((N, len(values)))
        onehot[np.arange(N), [col[v] for v in node_labels]] = 1.0
        blocks.append(onehot)
    features = np.concatenate(blocks, axis=1) if blocks else np.ones((N, 1))

    offsets = np.searchsorted(ind, np.arange(1, G + 2))  # first node of each graph
    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(G)]
    for i, j in adj:
        if not (1 <= i <= N and 1 <= j <= N):
            raise InconsistentIndicator(f"edge ({i}, {j}) references a node outside 1..{N}")
        gi, gj = ind[i - 1], ind[j - 1]
        if gi != gj:
            raise InconsistentIndicator(f"edge ({i}, {j}) joins graphs {gi} and {gj}")
        if i == j:
            continue
        base = offsets[gi - 1]
        a, b = sorted((i - 1 - base, j - 1 - base))
        edge_sets[gi - 1].add((int(a), int(b)))

    classes = {v: k for k, v in enumerate(sorted(set(graph_labels)))}
    graphs = []
    for g in range(G):
        lo, hi = offsets[g], offsets[g + 1]
        graphs.append(TUGraph(int(hi - lo), sorted(edge_sets[g]), features[lo:hi].copy(), classes[graph_labels[g]]))
    return graphs


def bundled_corpus() -> list[TUGraph]:
    """The six-graph ``MINI`` corpus shipped with the package."""
    from importlib.resources import as_file, files

    with as_file(files("scnp") / "data" / "MINI") as d:
        return load_tudataset(d, "MINI")


def lift_and_featurize(graph: TUGraph) -> Sample:
    """Clique-lift a graph; each edge carries the mean of its endpoint features."""
    complex = clique_lift(graph.vertex_count, graph.edges)
    F = np.asarray(graph.node_features, dtype=np.float64)
    if F.shape[0] != graph.vertex_count:
        raise ValueError("one feature row per node is required")
    e = complex.edges
    X = (F[e[:, 0]] + F[e[:, 1]]) / 2.0 if e.size else np.zeros((0, F.shape[1]))
    return Sample(complex, X, graph.label)


# -- splitting -------------------------------------------------------------------


def split(dataset: Sequence, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle then contiguous split into ``(train, val, test)``.

    When every class has at least three samples the order is arranged so
    that each contiguous slice receives its proportional share of every
    class (within one sample).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or not math.isclose(sum(fractions), 1.0, abs_tol=1e-6):
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    labels = np.array([s.label for s in dataset])
    classes, counts = np.unique(labels, return_counts=True)
    if n and counts.min() >= 3:
        keys = np.empty(n)
        for c, m in zip(classes, counts):
            members = rng.permutation(np.flatnonzero(labels == c))
            keys[members] = (np.arange(m) + rng.uniform(size=m)) / m
        order = np.argsort(keys, kind="stable")
    else:
        order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    cuts = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
    parts = []
    for name, frac, idx in zip(("train", "val", "test"), fractions, cuts):
        if frac > 0 and idx.size == 0:
            raise EmptySplit(f"{name} split is empty ({n} samples, fractions {fractions})")
        parts.append([dataset[i] for i in rng.permutation(idx)])
    return tuple(parts)


# -- serialization -------------------------------------------------------------------


def format_sample(sample: Sample) -> str:
    E, G = sample.X.shape
    rows = "\n".join(" ".join(repr(float(v)) for v in row) for row in sample.X)
    text = format_complex(sample.complex) + f"X {E} {G}\n"
    if E:
        text += rows + "\n"
    return text + f"label {sample.label}\n"


def save_dataset(samples: Sequence[Sample], path) -> None:
    Path(path).write_text("".join(format_sample(s) for s in samples))


def load_dataset(path) -> list[Sample]:
    """Read samples written by :func:`save_dataset`.

    Raises
    ------
    UnreadableFile
        If the file cannot be read or holds no samples.
    MalformedLine
        On a syntax error, with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    lines = _Peekable(numbered_lines(text))
    samples = []
    shared: dict[tuple, SimplicialComplex] = {}
    while lines.has_more():
        complex = parse_complex(lines, path)
        key = (complex.vertex_count, complex.edges.tobytes(), complex.triangles.tobytes())
        complex = shared.setdefault(key, complex)  # reuse cached operators across samples
        n, tokens = next(lines, (-1, []))
        if len(tokens) != 3 or tokens[0] != "X":
            raise MalformedLine(path, n, "expected 'X <E> <G>'")
        try:
            E, G = int(tokens[1]), int(tokens[2])
        except ValueError:
            raise MalformedLine(path, n, "expected 'X <E> <G>'") from None
        X = np.zeros((E, G))
        for r in range(E):
            n, tokens = next(lines, (-1, []))
            if len(tokens) != G:
                raise MalformedLine(path, n, f"expected {G} floats")
            try:
                X[r] = [float(t) for t in tokens]
            except ValueError:
                raise MalformedLine(path, n, f"expected {G} floats") from None
        n, tokens = next(lines, (-1, []))
        if len(tokens) != 2 or tokens[0] != "label":
            raise MalformedLine(path, n, "expected 'label <int>'")
        try:
            samples.append(Sample(complex, X, int(tokens[1])))
        except ValueError as exc:
            raise MalformedLine(path, n, str(exc)) from None
    if not samples:
        raise UnreadableFile(f"{path} contains no samples")
    return samples


class _Peekable:
    def __init__(self, it):
        self._it = iter(it)
        self._buf = []

    def __iter__(self):
        return self

    def __next__(self):
        return self._buf.pop() if self._buf else next(self._it)

    def has_more(self) -> bool:
        if not self._buf:
            try:
                self._buf.append(next(self._it))
            except StopIteration:
                return False
        return True
