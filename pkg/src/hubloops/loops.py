"""Loop decomposition of world-line bundles, winding numbers and spin flips."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configgraph import cycle_type, perm_sign
from .worldline import FLAG_D, FLAG_D_INF, FLAG_PERIODIC, Bundle, trace_arrays


class UntraceableBundle(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    electron: int
    t0: float
    t1: float
    orientation: int
    spin: int


@dataclass(frozen=True)
class Loop:
    segments: tuple
    w: int
    eps: int
    electrons_at_zero: tuple  # I_gamma: electrons whose t = 0 position lies on the loop


@dataclass
class LoopDecomposition:
    loops: list
    tau: np.ndarray
    pieces: dict  # raw piece arrays, indexed by piece id
    first_piece: np.ndarray  # piece holding each electron's t = 0 position

    @property
    def windings(self) -> list[int]:
        return sorted((lp.w for lp in self.loops), reverse=True)

    @property
    def cycle_type(self) -> tuple:
        return cycle_type(self.tau)

    def nonzero_windings(self) -> tuple:
        return tuple(w for w in self.windings if w > 0)

    def cross_section(self, t: float) -> list[int]:
        """Spin sum over pieces of each loop crossing the regular time t."""
        p = self.pieces
        out = [0] * len(self.loops)
        for k in range(len(p["e"])):
            if p["t0"][k] < t < p["t1"][k]:
                out[p["loop"][k]] += int(p["spin"][k])
        return out


def _trace_raw(bundle: Bundle, n_sites: int):
    N = bundle.N
    tau = bundle.tau if bundle.tau is not None else bundle.realized_perm()
    if tau is None:
        raise UntraceableBundle("terminal configuration is not a permutation of the initial one")
    J = len(bundle.times)
    P = 2 * N + 4 * J + 8
    arr = dict(
        e=np.empty(P, np.int64), t0=np.empty(P), t1=np.empty(P), x0=np.empty(P, np.int64),
        x1=np.empty(P, np.int64), co=np.empty(P, np.int64), loop=np.empty(P, np.int64),
        orient=np.empty(P, np.int64))
    other = np.empty(2 * P, np.int64)
    is_wrap = np.empty(2 * P, np.bool_)
    loop_w = np.empty(P, np.int64)
    loop_eps = np.empty(P, np.int64)
    npc, nl = trace_arrays(N, float(bundle.beta), n_sites, bundle.init.astype(np.int64),
                           np.asarray(tau, np.int64), bundle.times.astype(float),
                           bundle.elec.astype(np.int64), bundle.src.astype(np.int64),
                           bundle.dst.astype(np.int64), J, arr["e"], arr["t0"], arr["t1"],
                           arr["x0"], arr["x1"], arr["co"], arr["loop"], arr["orient"],
                           other, is_wrap, loop_w, loop_eps)
    if nl < 0:
        raise UntraceableBundle("open trajectory while tracing")
    pieces = {k: v[:npc].copy() for k, v in arr.items()}
    pieces["spin"] = 1 - 2 * (bundle.init[pieces["e"]] % 2)
    pieces["other"] = other[:2 * npc].copy()
    pieces["is_wrap"] = is_wrap[:2 * npc].copy()
    return np.asarray(tau), pieces, loop_w[:nl].copy(), loop_eps[:nl].copy()


def _check_constraints(bundle: Bundle, n_sites: int) -> None:
    """Reject bundles with equal-spin coincidences."""
    pts = bundle.init.copy()
    if len(set(pts.tolist())) < len(pts):
        raise UntraceableBundle("equal-spin coincidence at t = 0")
    for e, d in zip(bundle.elec, bundle.dst):
        pts[e] = 2 * d + pts[e] % 2
        if len(set(pts.tolist())) < len(pts):
            raise UntraceableBundle("equal-spin coincidence: bundle is outside D")


def trace_loops(bundle: Bundle, n_sites: int | None = None) -> LoopDecomposition:
    if n_sites is None:
        n_sites = int(max(bundle.init.max() // 2, bundle.dst.max(initial=0), bundle.src.max(initial=0))) + 1
    _check_constraints(bundle, n_sites)
    tau, pieces, lw, le = _trace_raw(bundle, n_sites)
    first = np.full(bundle.N, -1, dtype=np.int64)
    for k in range(len(pieces["e"])):
        e = pieces["e"][k]
        if pieces["t0"][k] == 0.0 and first[e] < 0:
            first[e] = k
    at_zero = {i: [] for i in range(len(lw))}
    for e in range(bundle.N):
        at_zero[int(pieces["loop"][first[e]])].append(e)
    segs = {i: [] for i in range(len(lw))}
    for k in range(len(pieces["e"])):
        segs[int(pieces["loop"][k])].append(Segment(int(pieces["e"][k]), float(pieces["t0"][k]),
                                                     float(pieces["t1"][k]),
                                                     int(pieces["orient"][k]),
                                                     int(pieces["spin"][k])))
    loops = [Loop(tuple(segs[i]), int(lw[i]), int(le[i]), tuple(at_zero[i])) for i in range(len(lw))]
    return LoopDecomposition(loops, tau, pieces, first)


# ---------------------------------------------------------------- weights

def loop_weight(dec: LoopDecomposition, beta: float, b: float) -> float:
    return float(np.prod([math.cosh(beta * b * lp.w) for lp in dec.loops]))


def field_weight(bundle: Bundle, beta: float, b: float) -> float:
    return math.exp(beta * b * int(bundle.spins.sum()))


def spin_sum_identity_holds(bundle: Bundle, dec: LoopDecomposition) -> bool:
    """sum_j sigma_0^(j) == sum_gamma eps(gamma) w(gamma), exactly in integers."""
    return int(bundle.spins.sum()) == sum(lp.eps * lp.w for lp in dec.loops)


def flip_average(dec: LoopDecomposition, beta: float, b: float) -> float:
    """Mean over all 2^N flip patterns xi of exp(beta b B_xi)."""
    N = len(dec.first_piece)
    total = 0.0
    for mask in range(1 << N):
        B = 0
        for lp in dec.loops:
            par = sum((mask >> i) & 1 for i in lp.electrons_at_zero) & 1
            B += lp.eps * lp.w * (-1 if par else 1)
        total += math.exp(beta * b * B)
    return total / (1 << N)


def flipped_field(dec: LoopDecomposition, xi) -> int:
    """B_xi: sum_gamma eps(gamma) (-1)^{sum_{i in I_gamma} xi_i} w(gamma)."""
    B = 0
    for lp in dec.loops:
        par = sum(int(xi[i]) for i in lp.electrons_at_zero) & 1
        B += lp.eps * lp.w * (-1 if par else 1)
    return B


# ---------------------------------------------------------------- spin flips

def _successors(dec: LoopDecomposition, N: int):
    """Original forward continuation of each piece (next piece of the same electron)."""
    p = dec.pieces
    order = {}
    for k in range(len(p["e"])):
        order.setdefault(int(p["e"][k]), []).append(k)
    nxt = np.full(len(p["e"]), -1, dtype=np.int64)
    for e, lst in order.items():
        lst.sort(key=lambda k: (p["t0"][k], p["t1"][k], k))
        for a, b in zip(lst, lst[1:]):
            nxt[a] = b
    return nxt


def apply_flips(bundle: Bundle, dec: LoopDecomposition, flip_loops) -> Bundle:
    """Rebuild the bundle after flipping spins along the given loops.

    Labels follow t = 0 positions: new electron j starts where electron j did.
    """
    p = dec.pieces
    N = bundle.N
    flip_loops = set(int(x) for x in flip_loops)
    spin = p["spin"].copy()
    for k in range(len(spin)):
        if int(p["loop"][k]) in flip_loops:
            spin[k] = -spin[k]
    nxt = _successors(dec, N)
    other = p["other"]
    is_wrap = p["is_wrap"]
    new_next = np.full(len(spin), -1, dtype=np.int64)
    for k in range(len(spin)):
        end = 2 * k + 1
        if is_wrap[end]:
            new_next[k] = other[end] // 2
            continue
        partner = other[end] // 2
        a, b = nxt[k], nxt[partner]
        new_next[k] = a if spin[a] == spin[k] else b
    owner_first = {int(dec.first_piece[e]): e for e in range(N)}
    init = np.empty(N, dtype=np.int64)
    recs = []
    last_to_chain = {}
    for e in range(N):
        k = int(dec.first_piece[e])
        init[e] = 2 * p["x0"][k] + (0 if spin[k] > 0 else 1)
        x_prev = int(p["x0"][k])
        while True:
            oe = int(p["e"][k])
            if x_prev != p["x0"][k]:
                recs.append((float(p["t0"][k]), e, x_prev, int(p["x0"][k])))
            ts, src, dst = bundle.electron_jumps(oe)
            m = (ts > p["t0"][k]) & (ts < p["t1"][k])
            for tt, a, b in zip(ts[m], src[m], dst[m]):
                recs.append((float(tt), e, int(a), int(b)))
            x_prev = int(p["x1"][k])
            if is_wrap[2 * k + 1]:
                last_to_chain[e] = owner_first[int(new_next[k])]
                break
            k = int(new_next[k])
    recs.sort(key=lambda r: (r[0], r[1]))
    tau = np.array([last_to_chain[e] for e in range(N)], dtype=np.int64)
    out = Bundle(bundle.beta, init,
                 np.array([r[0] for r in recs], dtype=float),
                 np.array([r[1] for r in recs], dtype=np.int64),
                 np.array([r[2] for r in recs], dtype=np.int64),
                 np.array([r[3] for r in recs], dtype=np.int64),
                 bundle.flags, tau)
    out.flags = audit_flags(out)
    return out


def spin_flip(bundle: Bundle, j: int, dec: LoopDecomposition | None = None,
              n_sites: int | None = None) -> Bundle:
    """g_j: flip spins along the loop through electron j's t = 0 position."""
    dec = trace_loops(bundle, n_sites) if dec is None else dec
    loop = int(dec.pieces["loop"][dec.first_piece[j]])
    return apply_flips(bundle, dec, [loop])


def apply_pattern(bundle: Bundle, dec: LoopDecomposition, xi) -> Bundle:
    """g^xi = product of g_j over xi_j = 1, realized in one rebuild."""
    par = {}
    for j, x in enumerate(xi):
        if x:
            lp = int(dec.pieces["loop"][dec.first_piece[j]])
            par[lp] = par.get(lp, 0) ^ 1
    return apply_flips(bundle, dec, [lp for lp, v in par.items() if v])


def audit_flags(bundle: Bundle) -> int:
    """Recompute D, D-infinity and periodicity flags from the jump record."""
    pts = bundle.init.copy()
    in_d = len(set(pts.tolist())) == len(pts)
    in_dinf = len(set((pts // 2).tolist())) == len(pts)
    for e, a, d in zip(bundle.elec, bundle.src, bundle.dst):
        if pts[e] // 2 != a:
            raise UntraceableBundle("jump record is not continuous")
        pts[e] = 2 * d + pts[e] % 2
        in_d &= len(set(pts.tolist())) == len(pts)
        in_dinf &= len(set((pts // 2).tolist())) == len(pts)
    periodic = sorted(pts.tolist()) == sorted(bundle.init.tolist())
    return (FLAG_D if in_d else 0) | (FLAG_D_INF if in_dinf else 0) | (FLAG_PERIODIC if periodic else 0)


def bundle_sign(bundle: Bundle) -> int:
    tau = bundle.realized_perm()
    return perm_sign(tau)


def same_bundle(a: Bundle, b: Bundle) -> bool:
    return (np.array_equal(a.init, b.init) and np.array_equal(a.times, b.times)
            and np.array_equal(a.elec, b.elec) and np.array_equal(a.src, b.src)
            and np.array_equal(a.dst, b.dst))
