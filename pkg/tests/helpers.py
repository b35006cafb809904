"""Shared fixtures and brute-force oracles for the test suite."""

import itertools

import numpy as np

from scnp.complex import SimplicialComplex, build_complex

FIX_A = dict(vertex_count=3, edges=[(0, 1), (0, 2), (1, 2)], triangles=[(0, 1, 2)])
FIX_B = dict(
    vertex_count=4,
    edges=[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)],
    triangles=[(0, 1, 2), (1, 2, 3)],
)


def fix_a():
    return build_complex(**FIX_A)


def fix_b():
    return build_complex(**FIX_B)


def random_complex(rng, max_edges=200, max_vertices=40, triangle_prob=0.6):
    """Random graph with a random subset of its 3-cliques filled in."""
    V = int(rng.integers(3, max_vertices + 1))
    pairs = list(itertools.combinations(range(V), 2))
    E = int(rng.integers(1, min(len(pairs), max_edges) + 1))
    idx = rng.choice(len(pairs), size=E, replace=False)
    edges = sorted(pairs[i] for i in idx)
    es = set(edges)
    tris = [
        t
        for t in itertools.combinations(range(V), 3)
        if {(t[0], t[1]), (t[0], t[2]), (t[1], t[2])} <= es and rng.random() < triangle_prob
    ]
    return build_complex(V, edges, tris)


def brute_incidence(vertex_count, edges, triangles):
    """Boundary matrices straight from the alternating-sign definition."""
    edges = [tuple(e) for e in edges]
    pos = {e: k for k, e in enumerate(edges)}
    B1 = np.zeros((vertex_count, len(edges)), dtype=np.int64)
    for k, (i, j) in enumerate(edges):
        B1[i, k] -= 1
        B1[j, k] += 1
    B2 = np.zeros((len(edges), len(triangles)), dtype=np.int64)
    for t, tri in enumerate(triangles):
        for drop in range(3):
            face = tuple(v for m, v in enumerate(tri) if m != drop)
            B2[pos[face], t] += (-1) ** drop
    return B1, B2


def brute_neighbors(complex, i):
    a = set(complex.edges[i].tolist())
    lower = {k for k, e in enumerate(complex.edge_list()) if k != i and a & set(e)}
    upper = set()
    for tri in complex.triangle_list():
        faces = [tuple(f) for f in itertools.combinations(tri, 2)]
        ids = [complex.edge_list().index(f) for f in faces]
        if i in ids:
            upper |= set(ids) - {i}
    return lower, upper


def permute_edges(complex, perm):
    """The same complex with edge ``perm[k]`` of the original stored at row ``k``."""
    return SimplicialComplex(complex.vertex_count, complex.edges[perm], complex.triangles)


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar ``f`` with respect to array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
