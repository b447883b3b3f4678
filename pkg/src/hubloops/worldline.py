"""Continuous-time world-line sampler built on the jump chain of the hopping matrix.

Each electron holds at site y for an Exp(d(y)) time and then hops to x with
probability t_xy / d(y); its spin never changes. The ensemble kernel draws a
uniform canonical representative, runs N independent paths up to beta and
reports event flags together with every path functional the estimators need.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._accel import njit
from .configgraph import representatives
from .lattice import Lattice

FLAG_D = 1
FLAG_D_INF = 2
FLAG_PERIODIC = 4
FLAG_OVERFLOW = 8
FLAG_ACCEPTED = 16

DEFAULT_JUMP_CAP = 256


class JumpOverflow(RuntimeError):
    pass


# ---------------------------------------------------------------- single paths

@njit
def _free_path(indptr, indices, cum, deg, x0, beta, sample, stream, keys, out_t, out_to):
    """Jump times and targets of one path; returns the jump count (-1 on overflow)."""
    buf = np.zeros(4, dtype=np.uint64)
    block = 0
    pos = 4
    x = x0
    t = 0.0
    n = 0
    cap = out_t.shape[0]
    while True:
        d = deg[x]
        if d <= 0.0:
            break
        if pos == 4:
            _rng.fill_block(buf, block, stream, sample, 0, keys)
            block += 1
            pos = 0
        u = _rng.to_unit_open(buf[pos])
        pos += 1
        t += -math.log(u) / d
        if t >= beta:
            break
        if pos == 4:
            _rng.fill_block(buf, block, stream, sample, 0, keys)
            block += 1
            pos = 0
        v = _rng.to_unit(buf[pos])
        pos += 1
        k = indptr[x]
        while k < indptr[x + 1] - 1 and v >= cum[k]:
            k += 1
        y = indices[k]
        if n >= cap:
            return -1
        out_t[n] = t
        out_to[n] = y
        n += 1
        x = y
    return n


@njit
def _jump_counts(indptr, indices, cum, deg, x0, t, n_samples, sample0, keys, out):
    jt = np.empty(4096, dtype=np.float64)
    jto = np.empty(4096, dtype=np.int64)
    for s in range(n_samples):
        out[s] = _free_path(indptr, indices, cum, deg, x0, t, sample0 + s, 0, keys, jt, jto)


@dataclass(frozen=True)
class FreePath:
    x0: int
    spin: int
    beta: float
    times: np.ndarray
    sites: np.ndarray  # site after each jump

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def site_at(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right"))
        return int(self.x0 if k == 0 else self.sites[k - 1])

    def holding_times(self) -> np.ndarray:
        edges = np.concatenate([[0.0], self.times])
        return np.diff(edges)


def _keys_of(rng_or_seed):
    if isinstance(rng_or_seed, np.ndarray):
        return rng_or_seed
    return _rng.seed_keys(int(rng_or_seed))


def sample_free_path(lat: Lattice, X0, beta: float, rng=0, sample: int = 0,
                     cap: int = 4096) -> FreePath:
    """One electron path from point X0 = (site, spin) or point index, up to time beta."""
    if isinstance(X0, tuple):
        site, spin = lat.index(X0[0]), X0[1]
    else:
        site, spin = int(X0) // 2, (1 if int(X0) % 2 == 0 else -1)
    indptr, indices, cum = lat.jump_tables()
    t = np.empty(cap)
    to = np.empty(cap, dtype=np.int64)
    n = _free_path(indptr, indices, cum, lat.degrees, site, float(beta), sample, 0,
                   _keys_of(rng), t, to)
    if n < 0:
        raise JumpOverflow("jump cap exceeded")
    return FreePath(site, spin, float(beta), t[:n].copy(), to[:n].copy())


def jump_counts(lat: Lattice, x0: int, t: float, n_samples: int, seed: int = 0) -> np.ndarray:
    indptr, indices, cum = lat.jump_tables()
    out = np.empty(n_samples, dtype=np.int64)
    _jump_counts(indptr, indices, cum, lat.degrees, int(x0), float(t), n_samples, 0,
                 _rng.seed_keys(seed), out)
    if np.any(out < 0):
        raise JumpOverflow("jump cap exceeded")
    return out


# ---------------------------------------------------------------- kernel pieces

@njit
def influence_q(mt, mf, mto, J, beta, omega, C):
    """Sum over modes and jump pairs of K_m(t_i, t_j) c_m(i) c_m(j)."""
    q = 0.0
    M = omega.shape[0]
    for m in range(M):
        w = omega[m]
        if w <= 0.0:
            continue
        pref = 0.5 / (1.0 - math.exp(-beta * w))
        for i in range(J):
            ci = C[m, mf[i], mto[i]]
            if ci == 0.0:
                continue
            acc = 0.0
            for j in range(J):
                cj = C[m, mf[j], mto[j]]
                if cj == 0.0:
                    continue
                dt = abs(mt[i] - mt[j])
                acc += (math.exp(-(beta - dt) * w) + math.exp(-dt * w)) * cj
            q += pref * ci * acc
    return q


@njit
def _pair_energy(pts, N, U, Uxy):
    e = 0.0
    for i in range(N):
        xi = pts[i] // 2
        for j in range(i + 1, N):
            xj = pts[j] // 2
            if xi == xj:
                if pts[i] != pts[j]:
                    e += U
            else:
                e += 2.0 * Uxy[xi, xj]
    return e


@njit
def trace_arrays(N, beta, n_sites, init_pts, tau, mt, me, mf, mto, J,
                 p_e, p_t0, p_t1, p_x0, p_x1, p_co, p_loop, p_orient, other, is_wrap,
                 loop_w, loop_eps):
    """Loop decomposition of an accepted bundle.

    World lines are cut at the boundaries of every co-location interval (two
    opposite spins on one site), and at t = 0 for pairs co-located there. At
    a boundary the two pieces on the free side are joined with each other,
    and so are the two co-located pieces, each join reversing the time
    orientation. Returns (n_pieces, n_loops), or (-1, -1) for an open trace.
    """
    cur = np.empty(N, dtype=np.int64)
    first = np.empty(N, dtype=np.int64)
    partner = np.full(N, -1, dtype=np.int64)
    pos = np.empty(N, dtype=np.int64)
    occ = np.full((n_sites, 2), -1, dtype=np.int64)
    npc = 0
    for e in range(N):
        pos[e] = init_pts[e] // 2
        occ[pos[e], init_pts[e] % 2] = e
    for e in range(N):
        s = init_pts[e] % 2
        f = occ[pos[e], 1 - s]
        if f >= 0:
            partner[e] = f
    for k in range(other.shape[0]):
        other[k] = -1
        is_wrap[k] = False
    # opening pieces at t = 0
    for e in range(N):
        if partner[e] >= 0:
            p_e[npc] = e
            p_t0[npc] = 0.0
            p_t1[npc] = 0.0
            p_x0[npc] = pos[e]
            p_x1[npc] = pos[e]
            p_co[npc] = -1
            first[e] = npc
            npc += 1
        else:
            p_e[npc] = e
            p_t0[npc] = 0.0
            p_x0[npc] = pos[e]
            p_co[npc] = -1
            first[e] = npc
            cur[e] = npc
            npc += 1
    for e in range(N):
        f = partner[e]
        if f > e:
            other[2 * first[e] + 1] = 2 * first[f] + 1
            other[2 * first[f] + 1] = 2 * first[e] + 1
            for a in (e, f):
                p_e[npc] = a
                p_t0[npc] = 0.0
                p_x0[npc] = pos[a]
                p_co[npc] = partner[a]
                cur[a] = npc
                npc += 1
            other[2 * cur[e]] = 2 * cur[f]
            other[2 * cur[f]] = 2 * cur[e]
    for k in range(J):
        e = me[k]
        a = mf[k]
        b = mto[k]
        t = mt[k]
        s = init_pts[e] % 2
        ended = False
        f = partner[e]
        if f >= 0:
            pe = cur[e]
            pf = cur[f]
            p_t1[pe] = t
            p_x1[pe] = a
            p_t1[pf] = t
            p_x1[pf] = a
            other[2 * pe + 1] = 2 * pf + 1
            other[2 * pf + 1] = 2 * pe + 1
            p_e[npc] = e
            p_t0[npc] = t
            p_x0[npc] = b
            p_co[npc] = -1
            cur[e] = npc
            npc += 1
            p_e[npc] = f
            p_t0[npc] = t
            p_x0[npc] = a
            p_co[npc] = -1
            cur[f] = npc
            npc += 1
            other[2 * cur[e]] = 2 * cur[f]
            other[2 * cur[f]] = 2 * cur[e]
            partner[e] = -1
            partner[f] = -1
            ended = True
        occ[a, s] = -1
        occ[b, s] = e
        pos[e] = b
        g = occ[b, 1 - s]
        if g >= 0:
            pe = cur[e]
            pg = cur[g]
            p_t1[pe] = t
            p_x1[pe] = b if ended else a
            p_t1[pg] = t
            p_x1[pg] = b
            other[2 * pe + 1] = 2 * pg + 1
            other[2 * pg + 1] = 2 * pe + 1
            p_e[npc] = e
            p_t0[npc] = t
            p_x0[npc] = b
            p_co[npc] = g
            cur[e] = npc
            npc += 1
            p_e[npc] = g
            p_t0[npc] = t
            p_x0[npc] = b
            p_co[npc] = e
            cur[g] = npc
            npc += 1
            other[2 * cur[e]] = 2 * cur[g]
            other[2 * cur[g]] = 2 * cur[e]
            partner[e] = g
            partner[g] = e
    for e in range(N):
        p_t1[cur[e]] = beta
        p_x1[cur[e]] = pos[e]
    for e in range(N):
        pa = 2 * cur[e] + 1
        pb = 2 * first[tau[e]]
        other[pa] = pb
        other[pb] = pa
        is_wrap[pa] = True
        is_wrap[pb] = True
    for p in range(npc):
        p_loop[p] = -1
    nl = 0
    for p0 in range(npc):
        if p_loop[p0] >= 0:
            continue
        c = p0
        d = 1
        w = 0
        spin0 = 1 - 2 * (init_pts[p_e[p0]] % 2)
        prod = spin0
        while True:
            if p_loop[c] >= 0:
                return -1, -1
            p_loop[c] = nl
            p_orient[c] = d
            sp = 1 - 2 * (init_pts[p_e[c]] % 2)
            if sp * d != prod:
                return -1, -1
            ex = 2 * c + 1 if d == 1 else 2 * c
            q = other[ex]
            if q < 0:
                return -1, -1
            if is_wrap[ex]:
                w += d
            c = q // 2
            d = 1 if q % 2 == 0 else -1
            if c == p0:
                if d != 1:
                    return -1, -1
                break
        loop_w[nl] = abs(w)
        if w == 0:
            loop_eps[nl] = 1
        elif w > 0:
            loop_eps[nl] = prod
        else:
            loop_eps[nl] = -prod
        nl += 1
    return npc, nl


@njit
def _perm_sign(tau, N):
    seen = np.zeros(N, dtype=np.bool_)
    sgn = 1
    for i in range(N):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = tau[j]
            length += 1
        if length % 2 == 0:
            sgn = -sgn
    return sgn


@njit
def ensemble_kernel(indptr, indices, cum, deg, reps, N, beta, constraint,
                    U, Uxy, v, alpha, omega, C, keys, sample0, n_samples, cap, do_loops,
                    flags, rep_idx, sign, sum_sigma, coul, dcomp, vint, phase, qval,
                    tau_out, final_out, wcount, njumps):
    n_sites = deg.shape[0]
    R = reps.shape[0]
    jt = np.empty((N, cap), dtype=np.float64)
    jto = np.empty((N, cap), dtype=np.int64)
    nj = np.empty(N, dtype=np.int64)
    tot = N * cap
    mt = np.empty(tot, dtype=np.float64)
    me = np.empty(tot, dtype=np.int64)
    mf = np.empty(tot, dtype=np.int64)
    mto = np.empty(tot, dtype=np.int64)
    ptr = np.empty(N, dtype=np.int64)
    init = np.empty(N, dtype=np.int64)
    pts = np.empty(N, dtype=np.int64)
    occ_pt = np.zeros(2 * n_sites, dtype=np.int64)
    occ_site = np.zeros(n_sites, dtype=np.int64)
    tau = np.empty(N, dtype=np.int64)
    buf = np.zeros(4, dtype=np.uint64)
    P = 2 * N + 4 * tot + 8
    p_e = np.empty(P, dtype=np.int64)
    p_t0 = np.empty(P, dtype=np.float64)
    p_t1 = np.empty(P, dtype=np.float64)
    p_x0 = np.empty(P, dtype=np.int64)
    p_x1 = np.empty(P, dtype=np.int64)
    p_co = np.empty(P, dtype=np.int64)
    p_loop = np.empty(P, dtype=np.int64)
    p_orient = np.empty(P, dtype=np.int64)
    other = np.empty(2 * P, dtype=np.int64)
    is_wrap = np.empty(2 * P, dtype=np.bool_)
    loop_w = np.empty(P, dtype=np.int64)
    loop_eps = np.empty(P, dtype=np.int64)
    for k in range(n_samples):
        smp = sample0 + k
        _rng.fill_block(buf, 0, 0, smp, 1, keys)
        r = int(_rng.to_unit(buf[0]) * R)
        if r >= R:
            r = R - 1
        rep_idx[k] = r
        fl = 0
        total = 0
        ssum = 0
        for e in range(N):
            init[e] = reps[r, e]
            pts[e] = init[e]
            ssum += 1 - 2 * (init[e] % 2)
            n = _free_path(indptr, indices, cum, deg, init[e] // 2, beta, smp, e, keys, jt[e], jto[e])
            if n < 0:
                fl |= FLAG_OVERFLOW
                n = cap
            nj[e] = n
            total += n
        sum_sigma[k] = ssum
        njumps[k] = total
        # merge per-electron jump lists by time, ties by electron index
        for e in range(N):
            ptr[e] = 0
        for m in range(total):
            best = -1
            bt = 0.0
            for e in range(N):
                if ptr[e] < nj[e]:
                    if best < 0 or jt[e, ptr[e]] < bt:
                        best = e
                        bt = jt[e, ptr[e]]
            me[m] = best
            mt[m] = bt
            mto[m] = jto[best, ptr[best]]
            if ptr[best] == 0:
                mf[m] = init[best] // 2
            else:
                mf[m] = jto[best, ptr[best] - 1]
            ptr[best] += 1
        for x in range(2 * n_sites):
            occ_pt[x] = 0
        for x in range(n_sites):
            occ_site[x] = 0
        in_d = True
        in_dinf = True
        for e in range(N):
            occ_pt[pts[e]] += 1
            occ_site[pts[e] // 2] += 1
            if occ_pt[pts[e]] > 1:
                in_d = False
            if occ_site[pts[e] // 2] > 1:
                in_dinf = False
        V = _pair_energy(pts, N, U, Uxy)
        dsum = 0.0
        vsum = 0.0
        for e in range(N):
            dsum += deg[pts[e] // 2]
            vsum += v[pts[e] // 2]
        c_int = 0.0
        d_int = 0.0
        v_int = 0.0
        ph = 0.0
        tprev = 0.0
        for m in range(total):
            # positions are tracked to the end; integrals only while the path is admissible
            live = in_d and (constraint == 0 or in_dinf)
            if live:
                dt = mt[m] - tprev
                c_int += V * dt
                d_int += dsum * dt
                v_int += vsum * dt
                tprev = mt[m]
            e = me[m]
            old = pts[e]
            new = 2 * mto[m] + (old % 2)
            occ_pt[old] -= 1
            occ_site[old // 2] -= 1
            occ_pt[new] += 1
            occ_site[new // 2] += 1
            if occ_pt[new] > 1:
                in_d = False
            if occ_site[new // 2] > 1:
                in_dinf = False
            pts[e] = new
            if live:
                ph += alpha[mf[m], mto[m]]
                V = _pair_energy(pts, N, U, Uxy)
                dsum += deg[new // 2] - deg[old // 2]
                vsum += v[new // 2] - v[old // 2]
        dt = beta - tprev
        c_int += V * dt
        d_int += dsum * dt
        v_int += vsum * dt
        if in_d:
            fl |= FLAG_D
        if in_dinf:
            fl |= FLAG_D_INF
        periodic = True
        for i in range(N):
            if occ_pt[pts[i]] != 1:
                periodic = False
        for i in range(N):
            tau[i] = -1
            for j in range(N):
                if pts[i] == init[j]:
                    tau[i] = j
            if tau[i] < 0:
                periodic = False
        if periodic:
            fl |= FLAG_PERIODIC
        for i in range(N):
            tau_out[k, i] = tau[i]
            final_out[k, i] = pts[i]
        for w in range(N + 1):
            wcount[k, w] = 0
        ok = in_d if constraint == 0 else in_dinf
        accepted = periodic and ok and (fl & FLAG_OVERFLOW) == 0
        coul[k] = c_int
        dcomp[k] = d_int
        vint[k] = v_int
        phase[k] = ph
        qval[k] = 0.0
        sign[k] = 0
        if accepted:
            fl |= FLAG_ACCEPTED
            sign[k] = _perm_sign(tau, N)
            qval[k] = influence_q(mt, mf, mto, total, beta, omega, C)
            if do_loops:
                npc, nl = trace_arrays(N, beta, n_sites, init, tau, mt, me, mf, mto, total,
                                       p_e, p_t0, p_t1, p_x0, p_x1, p_co, p_loop, p_orient,
                                       other, is_wrap, loop_w, loop_eps)
                if nl < 0:
                    wcount[k, 0] = -1
                else:
                    for li in range(nl):
                        wcount[k, loop_w[li]] += 1
        flags[k] = fl


# ---------------------------------------------------------------- Python-facing API

@dataclass(frozen=True)
class PathEnsembleConfig:
    beta: float
    n_samples: int
    seed: int = 0
    constraint: str = "finite-u"
    init_law: str = "uniform-representatives"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n_samples < 1:
            raise ValueError("sample count must be >= 1")
        if self.constraint not in ("finite-u", "u-infinity"):
            raise ValueError("constraint must be 'finite-u' or 'u-infinity'")
        if self.init_law != "uniform-representatives":
            raise ValueError("only the uniform-representatives initial law is supported")


@dataclass
class KernelInputs:
    """Everything the ensemble kernel needs, as plain arrays."""

    lattice: Lattice
    N: int
    reps: np.ndarray
    U: float = 0.0
    Uxy: np.ndarray | None = None
    v: np.ndarray | None = None
    alpha: np.ndarray | None = None
    omega: np.ndarray | None = None
    C: np.ndarray | None = None
    jump_cap: int = DEFAULT_JUMP_CAP

    def __post_init__(self):
        n = self.lattice.size
        self.reps = np.ascontiguousarray(self.reps, dtype=np.int64)
        if self.reps.ndim != 2 or self.reps.shape[1] != self.N:
            raise ValueError("representatives must have shape (R, N)")
        self.Uxy = np.zeros((n, n)) if self.Uxy is None else np.ascontiguousarray(self.Uxy, float)
        self.v = np.zeros(n) if self.v is None else np.ascontiguousarray(self.v, float)
        self.alpha = np.zeros((n, n)) if self.alpha is None else np.ascontiguousarray(self.alpha, float)
        if self.omega is None or len(self.omega) == 0:
            self.omega = np.zeros(1)
            self.C = np.zeros((1, n, n))
        self.omega = np.ascontiguousarray(self.omega, float)
        self.C = np.ascontiguousarray(self.C, float)
        self.tables = self.lattice.jump_tables()


@dataclass
class EnsembleBatch:
    sample0: int
    flags: np.ndarray
    rep_idx: np.ndarray
    sign: np.ndarray
    sum_sigma: np.ndarray
    coul: np.ndarray
    dcomp: np.ndarray
    vint: np.ndarray
    phase: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    final: np.ndarray
    wcount: np.ndarray
    njumps: np.ndarray

    @property
    def in_D(self):
        return (self.flags & FLAG_D) != 0

    @property
    def in_D_inf(self):
        return (self.flags & FLAG_D_INF) != 0

    @property
    def periodic(self):
        return (self.flags & FLAG_PERIODIC) != 0

    @property
    def accepted(self):
        return (self.flags & FLAG_ACCEPTED) != 0

    def __len__(self):
        return len(self.flags)


def run_batch(inp: KernelInputs, beta: float, constraint: str, keys: np.ndarray,
              sample0: int, n: int, do_loops: bool = True) -> EnsembleBatch:
    N = inp.N
    out = EnsembleBatch(
        sample0,
        np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64),
        np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n),
        np.zeros((n, N), np.int64), np.zeros((n, N), np.int64), np.zeros((n, N + 1), np.int64),
        np.zeros(n, np.int64))
    indptr, indices, cum = inp.tables
    ensemble_kernel(indptr, indices, cum, inp.lattice.degrees, inp.reps, N, float(beta),
                    0 if constraint == "finite-u" else 1, float(inp.U), inp.Uxy, inp.v,
                    inp.alpha, inp.omega, inp.C, keys, sample0, n, inp.jump_cap, do_loops,
                    out.flags, out.rep_idx, out.sign, out.sum_sigma, out.coul, out.dcomp,
                    out.vint, out.phase, out.q, out.tau, out.final, out.wcount, out.njumps)
    if np.any(out.flags & FLAG_OVERFLOW):
        raise JumpOverflow(f"a path exceeded the jump cap {inp.jump_cap}")
    if np.any(out.wcount[:, 0] < 0):
        raise RuntimeError("loop tracing produced an open trajectory")
    return out


def iter_batches(inp: KernelInputs, beta: float, constraint: str, seed: int, n_samples: int,
                 batch_size: int, threads: int = 1, do_loops: bool = True):
    """Yield batches in sample order. Batch contents depend only on the seed and
    sample indices, never on the thread count."""
    keys = _rng.seed_keys(seed)
    starts = list(range(0, n_samples, batch_size))
    sizes = [min(batch_size, n_samples - s) for s in starts]
    if threads <= 1:
        for s, n in zip(starts, sizes):
            yield run_batch(inp, beta, constraint, keys, s, n, do_loops)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        window = []
        for s, n in zip(starts, sizes):
            window.append(ex.submit(run_batch, inp, beta, constraint, keys, s, n, do_loops))
            if len(window) >= 2 * threads:
                yield window.pop(0).result()
        for f in window:
            yield f.result()


@dataclass
class Bundle:
    """A sampled N-electron world-line bundle.

    Jumps are merged over electrons in time order: ``times[k]`` is when
    electron ``elec[k]`` hops from ``src[k]`` to ``dst[k]``.
    """

    beta: float
    init: np.ndarray
    times: np.ndarray
    elec: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    flags: int = 0
    tau: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.init)

    @property
    def spins(self) -> np.ndarray:
        return 1 - 2 * (self.init % 2)

    def electron_jumps(self, e: int):
        m = self.elec == e
        return self.times[m], self.src[m], self.dst[m]

    def final_points(self) -> np.ndarray:
        pts = self.init.copy()
        for e, d in zip(self.elec, self.dst):
            pts[e] = 2 * d + pts[e] % 2
        return pts

    def points_at(self, t: float) -> np.ndarray:
        pts = self.init.copy()
        for tt, e, d in zip(self.times, self.elec, self.dst):
            if tt > t:
                break
            pts[e] = 2 * d + pts[e] % 2
        return pts

    def realized_perm(self):
        fin = self.final_points()
        pos = {int(p): i for i, p in enumerate(self.init)}
        if set(fin.tolist()) != set(self.init.tolist()):
            return None
        return np.array([pos[int(p)] for p in fin], dtype=np.int64)

    @property
    def in_D(self) -> bool:
        return bool(self.flags & FLAG_D)

    @property
    def in_D_inf(self) -> bool:
        return bool(self.flags & FLAG_D_INF)

    @property
    def periodic(self) -> bool:
        return bool(self.flags & FLAG_PERIODIC)


def regenerate_bundle(inp: KernelInputs, beta: float, keys: np.ndarray, sample: int,
                      flags: int = 0) -> Bundle:
    """Rebuild the full jump record of one kernel sample from its counter."""
    N = inp.N
    indptr, indices, cum = inp.tables
    buf = np.zeros(4, dtype=np.uint64)
    _rng.fill_block(buf, 0, 0, sample, _rng.TAG_INIT, keys)
    R = inp.reps.shape[0]
    r = min(int(_rng.to_unit(buf[0]) * R), R - 1)
    init = inp.reps[r].copy()
    rec = []
    jt = np.empty(inp.jump_cap)
    jto = np.empty(inp.jump_cap, dtype=np.int64)
    for e in range(N):
        n = _free_path(indptr, indices, cum, inp.lattice.degrees, int(init[e] // 2), float(beta),
                       sample, e, keys, jt, jto)
        if n < 0:
            raise JumpOverflow("jump cap exceeded")
        prev = int(init[e] // 2)
        for k in range(n):
            rec.append((jt[k], e, prev, int(jto[k])))
            prev = int(jto[k])
    rec.sort(key=lambda r_: (r_[0], r_[1]))
    times = np.array([r_[0] for r_ in rec], dtype=float)
    elec = np.array([r_[1] for r_ in rec], dtype=np.int64)
    src = np.array([r_[2] for r_ in rec], dtype=np.int64)
    dst = np.array([r_[3] for r_ in rec], dtype=np.int64)
    b = Bundle(float(beta), init, times, elec, src, dst, flags)
    b.tau = b.realized_perm()
    b.meta["sample"] = sample
    return b


def sample_ensemble(lat: Lattice, N: int, cfg: PathEnsembleConfig, rng=None, U: float = 0.0,
                    batch_size: int = 4096):
    """Stream of (Bundle, flags) over cfg.n_samples draws.

    Bundles are rebuilt from the kernel's counters, so this is the slow,
    inspectable path; estimators consume kernel batches directly.
    """
    seed = cfg.seed if rng is None else int(rng)
    reps = np.array(representatives(lat.size, N, cfg.constraint), dtype=np.int64)
    if len(reps) == 0:
        raise ValueError("constraint class is empty")
    inp = KernelInputs(lat, N, reps, U=U)
    keys = _rng.seed_keys(seed)
    for batch in iter_batches(inp, cfg.beta, cfg.constraint, seed, cfg.n_samples, batch_size,
                              do_loops=False):
        for k in range(len(batch)):
            fl = int(batch.flags[k])
            b = regenerate_bundle(inp, cfg.beta, keys, batch.sample0 + k, fl)
            yield b, {"in_D": b.in_D, "in_D_infinity": b.in_D_inf,
                      "periodic_up_to_perm": b.periodic,
                      "tau": None if b.tau is None else tuple(int(x) for x in b.tau)}


# ---------------------------------------------------------------- path functionals

def _segments(bundle: Bundle):
    """Constant-configuration intervals (t0, t1, points)."""
    pts = bundle.init.copy()
    t0 = 0.0
    for t, e, d in zip(bundle.times, bundle.elec, bundle.dst):
        yield t0, t, pts.copy()
        pts[e] = 2 * d + pts[e] % 2
        t0 = t
    yield t0, bundle.beta, pts.copy()


def coulomb_integral(bundle: Bundle, lat: Lattice, U: float, U_offsite=None):
    """(integral of the interaction, integral of sum_j d(x_j)) over [0, beta]."""
    n = lat.size
    Uxy = np.zeros((n, n)) if U_offsite is None else np.asarray(U_offsite, float)
    vint = 0.0
    mu = 0.0
    for t0, t1, pts in _segments(bundle):
        dt = t1 - t0
        sites = pts // 2
        e = 0.0
        for i in range(len(pts)):
            for j in range(len(pts)):
                if i == j:
                    continue
                if sites[i] == sites[j]:
                    if i < j and pts[i] != pts[j]:
                        e += U
                else:
                    e += Uxy[sites[i], sites[j]]
        vint += e * dt
        mu += lat.degrees[sites].sum() * dt
    return vint, mu


def stochastic_phase(path, alpha, window=None) -> float:
    """Sum of alpha over the jumps of a single path inside the window (s, t].

    ``alpha`` is an (n, n) array, with NaN marking undefined edges, or a dict
    keyed by directed pairs (x, y). A dict may give only one orientation; the
    other is filled in by antisymmetry.
    """
    if isinstance(path, FreePath):
        times = path.times
        src = np.concatenate([[path.x0], path.sites[:-1]]).astype(int) if path.n_jumps else np.array([], int)
        dst = path.sites.astype(int)
        beta = path.beta
    else:
        times, src, dst, beta = path
    s, t = (0.0, beta) if window is None else window
    total = 0.0
    for tt, x, y in zip(times, src, dst):
        if s < tt <= t:
            total += _alpha_of(alpha, int(x), int(y))
    return total


def _alpha_of(alpha, x, y) -> float:
    if isinstance(alpha, dict):
        if (x, y) in alpha:
            return float(alpha[(x, y)])
        if (y, x) in alpha:
            return -float(alpha[(y, x)])
        raise KeyError(f"alpha is missing on traversed edge ({x}, {y})")
    a = float(np.asarray(alpha)[x, y])
    if math.isnan(a):
        raise KeyError(f"alpha is missing on traversed edge ({x}, {y})")
    return a


def fk_check_single(lat: Lattice, v, alpha, beta: float, X, Y, n_samples: int, rng=0,
                    batch: int = 65536):
    """Monte Carlo estimate of <delta_X, exp(-beta h_v(alpha)) delta_Y>.

    h_v(alpha) has diagonal d(x) + v(x) and off-diagonal -t_xy exp(i alpha_xy).
    Returns (estimate, standard error) as complex numbers.
    """
    if X % 2 != Y % 2:
        return 0j, 0.0
    inp = KernelInputs(lat, 1, np.array([[X]], dtype=np.int64), v=v, alpha=alpha)
    vals = []
    for b in iter_batches(inp, beta, "finite-u", int(rng), n_samples, batch, do_loops=False):
        hit = b.final[:, 0] == Y
        w = np.exp(-b.vint + 1j * b.phase) * hit
        vals.append(w)
    w = np.concatenate(vals)
    return complex(w.mean()), float(w.std(ddof=1) / math.sqrt(len(w)))
