"""Square lattices [-l/2, l/2)^d with open or periodic closure."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

NEIGHBOR_NORMS = ("l1", "linf")
BOUNDARIES = ("open", "periodic")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    d: int
    l: int
    t: float = 1.0
    neighbor_norm: str = "l1"
    boundary: str = "open"

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise LatticeError(f"dimension must be a positive integer, got {self.d!r}")
        if not isinstance(self.l, (int, np.integer)) or self.l < 2 or self.l % 2:
            raise LatticeError(f"side must be an even positive integer, got {self.l!r}")
        if not self.t > 0:
            raise LatticeError(f"hopping must be strictly positive, got {self.t!r}")
        if self.neighbor_norm not in NEIGHBOR_NORMS:
            raise LatticeError(f"neighbor_norm must be one of {NEIGHBOR_NORMS}")
        if self.boundary not in BOUNDARIES:
            raise LatticeError(f"boundary must be one of {BOUNDARIES}")


@dataclass(frozen=True, eq=False)
class Lattice:
    """Immutable lattice graph.

    ``edges`` lists unordered index pairs (i < j). On a periodic lattice with
    l = 2 the wrap bond coincides with the open bond, so the pair appears
    twice and carries hopping 2t.
    """

    spec: LatticeSpec
    vertices: tuple
    edges: tuple
    hopping: np.ndarray
    degrees: np.ndarray
    _index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def coords(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    def index(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            if 0 <= x < self.size:
                return int(x)
            raise LatticeError(f"vertex index {x} out of range")
        key = tuple(int(v) for v in np.atleast_1d(x))
        try:
            return self._index[key]
        except KeyError:
            raise LatticeError(f"unknown vertex {x!r}") from None

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.hopping[i])

    def directed_edges(self) -> list[tuple[int, int]]:
        n = self.size
        return [(i, j) for i in range(n) for j in range(n) if self.hopping[i, j] > 0]

    def jump_tables(self):
        """CSR neighbor lists with cumulative jump probabilities t_xy/d(x)."""
        indptr = [0]
        indices, cum = [], []
        for i in range(self.size):
            nb = self.neighbors(i)
            p = np.cumsum(self.hopping[i, nb]) / self.degrees[i] if len(nb) else np.array([])
            if len(nb):
                p[-1] = 1.0
            indices.extend(nb.tolist())
            cum.extend(p.tolist())
            indptr.append(len(indices))
        return (np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64),
                np.array(cum, dtype=np.float64))


def _adjacent(x, y, norm: str) -> bool:
    diff = np.abs(np.subtract(x, y))
    if norm == "l1":
        return int(diff.sum()) == 1
    return int(diff.max()) == 1


def build_lattice(spec: LatticeSpec) -> Lattice:
    half = spec.l // 2
    axis = range(-half, half)
    vertices = tuple(itertools.product(axis, repeat=spec.d))
    index = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if _adjacent(vertices[i], vertices[j], spec.neighbor_norm):
                edges.append((i, j))
    if spec.boundary == "periodic":
        # wrap bonds: coordinates differ by l-1 along exactly one axis
        for i in range(n):
            for j in range(i + 1, n):
                diff = np.abs(np.subtract(vertices[i], vertices[j]))
                if np.count_nonzero(diff) == 1 and diff.max() == spec.l - 1:
                    edges.append((i, j))
    hopping = np.zeros((n, n))
    for i, j in edges:
        hopping[i, j] += spec.t
        hopping[j, i] += spec.t
    degrees = hopping.sum(axis=1)
    return Lattice(spec, vertices, tuple(edges), hopping, degrees, index)


def degree(lat: Lattice, x) -> float:
    i = lat.index(x)
    return float(lat.hopping[i].sum())


def chain(l: int, t: float = 1.0, boundary: str = "open") -> Lattice:
    return build_lattice(LatticeSpec(1, l, t, "l1", boundary))


def square(l: int, t: float = 1.0, boundary: str = "open", neighbor_norm: str = "l1") -> Lattice:
    return build_lattice(LatticeSpec(2, l, t, neighbor_norm, boundary))
