"""Order-2 simplicial complexes: incidence, Hodge Laplacians, reduction.

Edges are oriented from the lower to the higher vertex index and triangles
by their sorted vertex triple. This fixes every sign in the incidence
matrices, so two complexes with the same simplex lists always produce the
same operators.

Laplacians are stored densely. ``Lu`` is assembled by scattering one 3x3
block per triangle, which is already the COO layout a sparse matrix would
use; switching the model to sparse operators means building a
``scipy.sparse.coo_matrix`` from the same ``rows/cols/vals`` in
:attr:`SimplicialComplex.upper_laplacian` (and likewise for ``Ld``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptySelection, IndexOutOfRange, MalformedLine, MissingFace, ToleranceNotMet

__all__ = [
    "SimplicialComplex",
    "IncidenceMatrices",
    "HodgeLaplacians",
    "HodgeComponents",
    "build_complex",
    "incidence",
    "laplacians",
    "hodge_decompose",
    "reduce_complex",
    "clique_lift",
    "neighbors",
    "format_complex",
    "parse_complex",
    "read_complex",
    "write_complex",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _keys(pairs: np.ndarray, n: int) -> np.ndarray:
    return pairs[:, 0] * np.int64(max(n, 1)) + pairs[:, 1]


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Vertices, oriented edges and oriented triangles of an order-2 complex.

    ``edges`` is an ``(E, 2)`` integer array with ``i < j`` per row and
    ``triangles`` a ``(T, 3)`` array with ``i < j < k``. The row order is
    the simplex numbering; it need not be lexicographic
    (:func:`build_complex` produces the canonical lexicographic order).
    Construction validates index ranges, duplicates and closure.
    """

    vertex_count: int
    edges: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        V = int(self.vertex_count)
        if V < 0:
            raise ValueError("vertex_count must be non-negative")
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        for name, arr in (("edge", edges), ("triangle", tris)):
            if arr.size and (arr.min() < 0 or arr.max() >= V):
                raise IndexOutOfRange(f"{name} vertex index outside [0, {V})")
            if arr.size and np.any(np.diff(arr, axis=1) <= 0):
                raise ValueError(f"{name} vertices must be strictly increasing within each simplex")

        ekeys = _keys(edges, V)
        if np.unique(ekeys).size != ekeys.size:
            raise ValueError("duplicate edge")
        tkeys = (tris[:, 0] * V + tris[:, 1]) * V + tris[:, 2]
        if np.unique(tkeys).size != tkeys.size:
            raise ValueError("duplicate triangle")

        tri_edges = np.empty((tris.shape[0], 3), dtype=np.int64)
        if tris.size:
            order = np.argsort(ekeys, kind="stable")
            sorted_keys = ekeys[order]
            for c, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
                q = tris[:, a] * V + tris[:, b]
                pos = np.searchsorted(sorted_keys, q)
                pos = np.minimum(pos, max(sorted_keys.size - 1, 0))
                found = sorted_keys.size > 0
                ok = (sorted_keys[pos] == q) if found else np.zeros(q.shape, bool)
                if not np.all(ok):
                    t = tris[np.argmin(ok)]
                    raise MissingFace(
                        f"triangle {tuple(int(v) for v in t)} lacks edge "
                        f"({int(t[a])}, {int(t[b])})"
                    )
                tri_edges[:, c] = order[pos]

        object.__setattr__(self, "vertex_count", V)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "triangles", _readonly(tris))
        object.__setattr__(self, "triangle_edges", _readonly(tri_edges))

    @classmethod
    def _trusted(cls, V, edges, triangles, triangle_edges) -> "SimplicialComplex":
        # Skips validation; callers guarantee the invariants.
        obj = object.__new__(cls)
        object.__setattr__(obj, "vertex_count", int(V))
        object.__setattr__(obj, "edges", _readonly(edges))
        object.__setattr__(obj, "triangles", _readonly(triangles))
        object.__setattr__(obj, "triangle_edges", _readonly(triangle_edges))
        return obj

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SimplicialComplex):
            return NotImplemented
        return (
            self.vertex_count == other.vertex_count
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.triangles, other.triangles)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"SimplicialComplex(V={self.vertex_count}, E={self.num_edges}, "
            f"T={self.num_triangles})"
        )

    def edge_list(self) -> list[tuple[int, int]]:
        return [tuple(map(int, e)) for e in self.edges]

    def triangle_list(self) -> list[tuple[int, int, int]]:
        return [tuple(map(int, t)) for t in self.triangles]

    @cached_property
    def lower_laplacian(self) -> np.ndarray:
        """``Ld = B1^T B1`` as a dense float array."""
        B1 = np.zeros((self.vertex_count, self.num_edges))
        cols = np.arange(self.num_edges)
        B1[self.edges[:, 0], cols] = -1.0
        B1[self.edges[:, 1], cols] = 1.0
        return _readonly(B1.T @ B1)

    @cached_property
    def upper_laplacian(self) -> np.ndarray:
        """``Lu = B2 B2^T`` assembled from the 3x3 blocks of each triangle."""
        E = self.num_edges
        te = self.triangle_edges
        signs = np.array([1.0, -1.0, 1.0])
        rows = np.repeat(te, 3, axis=1).reshape(-1)
        cols = np.tile(te, (1, 3)).reshape(-1)
        vals = np.tile(np.outer(signs, signs).reshape(-1), te.shape[0])
        flat = np.bincount(rows * E + cols, weights=vals, minlength=E * E)
        return _readonly(flat.reshape(E, E))

    @cached_property
    def hodge_laplacians(self) -> "HodgeLaplacians":
        return _assemble_laplacians(self)

    @cached_property
    def closed_neighborhood_mask(self) -> np.ndarray:
        """Boolean ``(E, E)`` mask of ``{i} ∪ N_down(i) ∪ N_up(i)``."""
        mask = (self.lower_laplacian != 0) | (self.upper_laplacian != 0)
        np.fill_diagonal(mask, True)
        return _readonly(mask)

    @cached_property
    def mean_aggregator(self) -> np.ndarray:
        """Row-stochastic matrix averaging each edge's closed neighbourhood."""
        mask = self.closed_neighborhood_mask.astype(np.float64)
        return _readonly(mask / mask.sum(axis=1, keepdims=True))

    @cached_property
    def neighborhood_index(self) -> np.ndarray:
        """``(E, K)`` closed-neighbourhood indices, short rows padded with the edge itself."""
        mask = self.closed_neighborhood_mask
        E = mask.shape[0]
        counts = mask.sum(axis=1)
        K = int(counts.max()) if E else 0
        index = np.repeat(np.arange(E)[:, None], max(K, 1), axis=1)
        rows, cols = np.nonzero(mask)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) if E else counts
        index[rows, np.arange(rows.size) - starts[rows]] = cols
        return _readonly(index)


class IncidenceMatrices(NamedTuple):
    B1: np.ndarray
    B2: np.ndarray


class HodgeLaplacians(NamedTuple):
    L0: np.ndarray
    Ld: np.ndarray
    Lu: np.ndarray
    L1: np.ndarray
    L2: np.ndarray


class HodgeComponents(NamedTuple):
    irrotational: np.ndarray
    solenoidal: np.ndarray
    harmonic: np.ndarray


def build_complex(
    vertex_count: int,
    edges: Iterable[Sequence[int]],
    triangles: Iterable[Sequence[int]] = (),
) -> SimplicialComplex:
    """Canonicalize raw simplex lists into a :class:`SimplicialComplex`.

    Each simplex is sorted, duplicates are dropped and both lists are put
    in lexicographic order.

    Raises
    ------
    IndexOutOfRange
        If any vertex index is negative or ``>= vertex_count``.
    MissingFace
        If a triangle has an edge that is not listed.
    """
    V = int(vertex_count)
    edge_set = set()
    for e in edges:
        i, j = sorted(int(v) for v in e)
        if i == j:
            raise ValueError(f"degenerate edge ({i}, {j})")
        edge_set.add((i, j))
    tri_set = set()
    for t in triangles:
        i, j, k = sorted(int(v) for v in t)
        if i == j or j == k:
            raise ValueError(f"degenerate triangle {tuple(t)}")
        tri_set.add((i, j, k))
    for s in list(edge_set) + list(tri_set):
        if min(s) < 0 or max(s) >= V:
            raise IndexOutOfRange(f"simplex {s} has a vertex outside [0, {V})")
    return SimplicialComplex(
        V,
        np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2),
        np.array(sorted(tri_set), dtype=np.int64).reshape(-1, 3),
    )


def incidence(complex: SimplicialComplex) -> IncidenceMatrices:
    """Signed integer incidence matrices ``B1`` (V×E) and ``B2`` (E×T)."""
    V, E, T = complex.vertex_count, complex.num_edges, complex.num_triangles
    B1 = np.zeros((V, E), dtype=np.int64)
    cols = np.arange(E)
    B1[complex.edges[:, 0], cols] = -1
    B1[complex.edges[:, 1], cols] = 1
    B2 = np.zeros((E, T), dtype=np.int64)
    cols = np.arange(T)
    te = complex.triangle_edges
    # boundary of [i,j,k] = [j,k] - [i,k] + [i,j]
    B2[te[:, 0], cols] = 1
    B2[te[:, 1], cols] = -1
    B2[te[:, 2], cols] = 1
    return IncidenceMatrices(B1, B2)


def laplacians(inc: IncidenceMatrices) -> HodgeLaplacians:
    """Dense Hodge Laplacians from incidence matrices."""
    B1 = np.asarray(inc.B1, dtype=np.float64)
    B2 = np.asarray(inc.B2, dtype=np.float64)
    Ld = B1.T @ B1
    Lu = B2 @ B2.T
    return HodgeLaplacians(L0=B1 @ B1.T, Ld=Ld, Lu=Lu, L1=Ld + Lu, L2=B2.T @ B2)


def _assemble_laplacians(complex: SimplicialComplex) -> HodgeLaplacians:
    # Only L0 and L2 go through sparse products; they are never on the model path.
    V, E, T = complex.vertex_count, complex.num_edges, complex.num_triangles
    B1 = sp.csr_matrix(
        (np.tile([-1.0, 1.0], E), (complex.edges.reshape(-1), np.repeat(np.arange(E), 2))), shape=(V, E)
    )
    B2 = sp.csr_matrix(
        (np.tile([1.0, -1.0, 1.0], T), (complex.triangle_edges.reshape(-1), np.repeat(np.arange(T), 3))),
        shape=(E, T),
    )
    Ld, Lu = complex.lower_laplacian, complex.upper_laplacian
    return HodgeLaplacians(
        L0=_readonly((B1 @ B1.T).toarray()),
        Ld=Ld,
        Lu=Lu,
        L1=_readonly(Ld + Lu),
        L2=_readonly((B2.T @ B2).toarray()),
    )


def hodge_decompose(z, inc: IncidenceMatrices, tol: float = 1e-8) -> HodgeComponents:
    """Split an edge flow into irrotational, solenoidal and harmonic parts.

    The irrotational part is the least-squares projection of ``z`` onto
    ``range(B1^T)``, the solenoidal part the projection onto
    ``range(B2)``; the harmonic part is what remains.

    Raises
    ------
    ToleranceNotMet
        If either projection leaves a residual that is not orthogonal to
        its subspace within ``tol`` relative to ``|z|``.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    B1 = np.asarray(inc.B1, dtype=np.float64)
    B2 = np.asarray(inc.B2, dtype=np.float64)
    if z.shape[0] != B1.shape[1]:
        raise ValueError(f"flow has length {z.shape[0]}, complex has {B1.shape[1]} edges")
    scale = max(np.linalg.norm(z), 1e-300)

    irr = np.zeros_like(z)
    if B1.size:
        a = np.linalg.lstsq(B1.T, z, rcond=None)[0]
        irr = B1.T @ a
    sol = np.zeros_like(z)
    if B2.size:
        b = np.linalg.lstsq(B2, z, rcond=None)[0]
        sol = B2 @ b

    res_irr = np.linalg.norm(B1 @ (z - irr)) / scale if B1.size else 0.0
    res_sol = np.linalg.norm(B2.T @ (z - sol)) / scale if B2.size else 0.0
    if max(res_irr, res_sol) > tol:
        raise ToleranceNotMet(f"projection residual {max(res_irr, res_sol):.3e} exceeds {tol:g}")
    return HodgeComponents(irr, sol, z - irr - sol)


def reduce_complex(complex: SimplicialComplex, kept_edges) -> SimplicialComplex:
    """Restrict a complex to a subset of its edges.

    All vertices are retained. Kept edges stay in their original relative
    order; a triangle survives only if its three edges are all kept.

    Raises
    ------
    EmptySelection
        If ``kept_edges`` is empty.
    """
    kept = np.unique(np.asarray(kept_edges, dtype=np.int64).reshape(-1))
    if kept.size == 0:
        raise EmptySelection("reduction needs at least one kept edge")
    E = complex.num_edges
    if kept[0] < 0 or kept[-1] >= E:
        raise IndexOutOfRange(f"kept edge index outside [0, {E})")
    new_index = np.full(E, -1, dtype=np.int64)
    new_index[kept] = np.arange(kept.size)
    te = new_index[complex.triangle_edges]
    alive = np.all(te >= 0, axis=1) if te.size else np.zeros(0, bool)
    child = SimplicialComplex._trusted(
        complex.vertex_count,
        complex.edges[kept].copy(),
        complex.triangles[alive].copy(),
        te[alive].copy(),
    )
    # Dropping edges deletes columns of B1, so Ld restricts to a principal submatrix.
    parent_Ld = complex.__dict__.get("lower_laplacian")
    if parent_Ld is not None:
        child.__dict__["lower_laplacian"] = _readonly(parent_Ld[np.ix_(kept, kept)])
    return child


def clique_lift(vertex_count: int, edges: Iterable[Sequence[int]]) -> SimplicialComplex:
    """Clique complex of a simple graph truncated at triangles."""
    V = int(vertex_count)
    adj: list[set[int]] = [set() for _ in range(V)]
    edge_list = []
    for e in edges:
        i, j = sorted(int(v) for v in e)
        if i == j:
            continue
        if i < 0 or j >= V:
            raise IndexOutOfRange(f"edge ({i}, {j}) outside [0, {V})")
        if j not in adj[i]:
            adj[i].add(j)
            adj[j].add(i)
            edge_list.append((i, j))
    tris = []
    for i, j in edge_list:
        for k in adj[i] & adj[j]:
            if k > j:
                tris.append((i, j, k))
    return build_complex(V, edge_list, tris)


def neighbors(complex: SimplicialComplex, i: int) -> tuple[set[int], set[int]]:
    """Lower (shared vertex) and upper (shared triangle) neighbours of edge ``i``."""
    E = complex.num_edges
    if not 0 <= i < E:
        raise IndexOutOfRange(f"edge {i} outside [0, {E})")
    a, b = complex.edges[i]
    e = complex.edges
    lower = set(np.flatnonzero((e[:, 0] == a) | (e[:, 1] == a) | (e[:, 0] == b) | (e[:, 1] == b)).tolist())
    lower.discard(i)
    te = complex.triangle_edges
    upper = set(te[np.any(te == i, axis=1)].reshape(-1).tolist())
    upper.discard(i)
    return lower, upper


# -- plain-text serialization ------------------------------------------------


def format_complex(complex: SimplicialComplex) -> str:
    lines = [f"V {complex.vertex_count}", f"E {complex.num_edges}"]
    lines += [f"{i} {j}" for i, j in complex.edges]
    lines.append(f"T {complex.num_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in complex.triangles]
    return "\n".join(lines) + "\n"


def numbered_lines(text: str) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, tokens)`` for non-blank lines."""
    for n, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if tokens:
            yield n, tokens


def _header(lines, tag, path):
    try:
        n, tokens = next(lines)
    except StopIteration:
        raise MalformedLine(path, -1, f"unexpected end of input, expected '{tag} <int>'") from None
    if len(tokens) != 2 or tokens[0] != tag:
        raise MalformedLine(path, n, f"expected '{tag} <int>'")
    try:
        return int(tokens[1])
    except ValueError:
        raise MalformedLine(path, n, f"expected '{tag} <int>'") from None


def _int_rows(lines, count, width, path):
    rows = []
    for _ in range(count):
        try:
            n, tokens = next(lines)
        except StopIteration:
            raise MalformedLine(path, -1, "unexpected end of input") from None
        if len(tokens) != width:
            raise MalformedLine(path, n, f"expected {width} integers")
        try:
            rows.append([int(t) for t in tokens])
        except ValueError:
            raise MalformedLine(path, n, f"expected {width} integers") from None
    return rows


def parse_complex(lines: Iterator[tuple[int, list[str]]], path="<string>") -> SimplicialComplex:
    """Read one ``V``/``E``/``T`` block from a :func:`numbered_lines` stream."""
    V = _header(lines, "V", path)
    edges = _int_rows(lines, _header(lines, "E", path), 2, path)
    tris = _int_rows(lines, _header(lines, "T", path), 3, path)
    return build_complex(V, edges, tris)


def read_complex(path) -> SimplicialComplex:
    path = Path(path)
    return parse_complex(numbered_lines(path.read_text()), path)


def write_complex(complex: SimplicialComplex, path) -> None:
    Path(path).write_text(format_complex(complex))
