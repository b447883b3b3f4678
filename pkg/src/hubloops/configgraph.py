"""Labeled electron configurations and dynamically allowed permutations.

A configuration is a tuple of N points, point = 2*site + s (s = 0 up, 1 down).
Permutations act on labels: (tau X)^(i) = X^(tau(i)).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice

CONSTRAINTS = ("finite-u", "u-infinity")
NODE_CAP = 5_000_000


class ConstraintError(ValueError):
    pass


def point(site: int, spin: int) -> int:
    """Point index of (site, spin) with spin in {+1, -1}."""
    return 2 * site + (0 if spin > 0 else 1)


def site_of(p: int) -> int:
    return p // 2


def spin_of(p: int) -> int:
    return 1 if p % 2 == 0 else -1


def in_omega_neq(X) -> bool:
    return len(set(X)) == len(X)


def in_omega_neq_inf(X) -> bool:
    return len({p // 2 for p in X}) == len(X)


def admissible(X, constraint: str) -> bool:
    return in_omega_neq(X) if constraint == "finite-u" else in_omega_neq_inf(X)


def canonical(X) -> tuple:
    return tuple(sorted(X))


def perm_sign(tau) -> int:
    tau = list(tau)
    seen = [False] * len(tau)
    sgn = 1
    for i in range(len(tau)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = tau[j]
            length += 1
        if length % 2 == 0:
            sgn = -sgn
    return sgn


def cycle_type(tau) -> tuple:
    tau = list(tau)
    seen = [False] * len(tau)
    out = []
    for i in range(len(tau)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = tau[j]
            length += 1
        out.append(length)
    return tuple(sorted(out, reverse=True))


def apply_perm(tau, X) -> tuple:
    return tuple(X[tau[i]] for i in range(len(X)))


def representatives(n_sites: int, N: int, constraint: str) -> list[tuple]:
    """Canonical (sorted) members of each unlabeled configuration class."""
    from itertools import combinations
    out = []
    for pts in combinations(range(2 * n_sites), N):
        if admissible(pts, constraint):
            out.append(pts)
    return out


@dataclass(frozen=True, eq=False)
class ConfigGraph:
    lattice: Lattice
    N: int
    constraint: str = "finite-u"
    node_cap: int = NODE_CAP

    def __post_init__(self):
        if self.constraint not in CONSTRAINTS:
            raise ConstraintError(f"constraint must be one of {CONSTRAINTS}")
        cap = 2 * self.lattice.size if self.constraint == "finite-u" else self.lattice.size
        if not 1 <= self.N <= cap:
            raise ConstraintError(f"N={self.N} exceeds the capacity {cap} of the constraint class")

    def neighbors(self, X):
        """Configurations reachable by one electron hopping along one edge."""
        lat = self.lattice
        occupied = set(X)
        sites = {p // 2 for p in X}
        for i, p in enumerate(X):
            x, s = divmod(p, 2)
            for y in lat.neighbors(x):
                q = 2 * int(y) + s
                if q in occupied:
                    continue
                if self.constraint == "u-infinity" and int(y) in sites:
                    continue
                yield X[:i] + (q,) + X[i + 1:]

    def component(self, X) -> set:
        X = tuple(int(p) for p in X)
        if len(X) != self.N or not admissible(X, self.constraint):
            raise ConstraintError(f"{X} violates the {self.constraint} constraint")
        seen = {X}
        queue = deque([X])
        while queue:
            cur = queue.popleft()
            for nxt in self.neighbors(cur):
                if nxt not in seen:
                    seen.add(nxt)
                    if len(seen) > self.node_cap:
                        raise RuntimeError(f"configuration graph exceeds node cap {self.node_cap}")
                    queue.append(nxt)
        return seen

    def witness_path(self, X, Y) -> list | None:
        """Shortest hop sequence from X to Y, or None."""
        X, Y = tuple(X), tuple(Y)
        prev = {X: None}
        queue = deque([X])
        while queue:
            cur = queue.popleft()
            if cur == Y:
                path = [cur]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for nxt in self.neighbors(cur):
                if nxt not in prev:
                    prev[nxt] = cur
                    queue.append(nxt)
        return None


def allowed_permutations(g: ConfigGraph, X) -> set:
    X = tuple(int(p) for p in X)
    comp = g.component(X)
    pos = {p: i for i, p in enumerate(X)}
    base = set(X)
    out = set()
    for Y in comp:
        if set(Y) == base:
            out.add(tuple(pos[p] for p in Y))
    return out


def allowed_cycle_types(g: ConfigGraph) -> set:
    out = set()
    for X in representatives(g.lattice.size, g.N, g.constraint):
        for tau in allowed_permutations(g, X):
            out.add(cycle_type(tau))
    return out


def permutation_table(g: ConfigGraph) -> list[dict]:
    """Rows (cycle type, sign, multiplicity) over all base configurations."""
    counts = {}
    for X in representatives(g.lattice.size, g.N, g.constraint):
        for tau in allowed_permutations(g, X):
            key = (cycle_type(tau), perm_sign(tau))
            counts[key] = counts.get(key, 0) + 1
    return [{"cycle_type": k[0], "sign": k[1], "multiplicity": v} for k, v in sorted(counts.items())]


def one_hole_parity_check(g: ConfigGraph) -> bool:
    if g.constraint != "u-infinity" or g.N != g.lattice.size - 1:
        raise ConstraintError("parity check needs U = infinity and N = |L| - 1")
    for X in representatives(g.lattice.size, g.N, g.constraint):
        if any(perm_sign(t) != 1 for t in allowed_permutations(g, X)):
            return False
    return True


def configs_array(configs) -> np.ndarray:
    return np.array(list(configs), dtype=np.int64)
