"""Exact diagonalization oracle for the Hubbard family of models.

Fermion basis states are bitmasks over points p = 2*site + s with s = 0 for
spin up and s = 1 for spin down (site-major, spin-minor). A state is
c*_{p1} ... c*_{pN}|0> with p1 < ... < pN, which fixes all fermionic signs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import Lattice

DENSE_CAP = 4096
HERMITIAN_TOL = 1e-12


class InfeasibleOracle(RuntimeError):
    """Raised when an exact computation would exceed the dense size cap."""


@dataclass(frozen=True)
class ModelParams:
    U: float = 0.0
    U_offsite: np.ndarray | None = None
    b: float = 0.0
    beta: float = 1.0
    z: complex = 1j

    def offsite(self, n: int) -> np.ndarray:
        if self.U_offsite is None:
            return np.zeros((n, n))
        m = np.asarray(self.U_offsite, dtype=float)
        if m.shape != (n, n):
            raise ValueError(f"U_offsite must be {n}x{n}")
        if not np.allclose(m, m.T, atol=0, rtol=0):
            raise ValueError("U_offsite must be symmetric")
        if np.any(np.diag(m) != 0):
            raise ValueError("U_offsite must have zero diagonal")
        return m


@dataclass(frozen=True)
class PhononParams:
    omega: float
    g: np.ndarray
    n_max: int
    truncation: str = "site"

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("phonon frequency must be positive")
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2 or not np.allclose(g, g.T, rtol=0, atol=1e-15):
            raise ValueError("g must be a real symmetric matrix")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.truncation not in ("site", "total"):
            raise ValueError("truncation must be 'site' or 'total'")


@dataclass(frozen=True)
class PhotonParams:
    L: float
    kappa: float
    m0: float
    n_max: int
    charge: float = 1.0

    def __post_init__(self):
        if not (self.L > 0 and self.kappa > 0 and self.m0 > 0):
            raise ValueError("L, kappa and m0 must be positive")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")


# ---------------------------------------------------------------- bases

@dataclass(frozen=True, eq=False)
class ManyBodyBasis:
    n_sites: int
    N: int
    constraint: str
    states: np.ndarray
    index: dict = field(repr=False)

    def __len__(self):
        return len(self.states)

    @property
    def two_sz(self) -> np.ndarray:
        """Twice S^3 per state: (#up - #down)."""
        out = np.zeros(len(self.states), dtype=np.int64)
        for k, st in enumerate(self.states):
            up = bin(st & _UP_MASKS[self.n_sites]).count("1")
            out[k] = 2 * up - self.N
        return out

    def occupations(self) -> np.ndarray:
        """n_{x,s} per state, shape (dim, n_sites, 2)."""
        occ = np.zeros((len(self.states), self.n_sites, 2), dtype=np.int64)
        for k, st in enumerate(self.states):
            for p in range(2 * self.n_sites):
                if st >> p & 1:
                    occ[k, p // 2, p % 2] = 1
        return occ


_UP_MASKS = {n: sum(1 << (2 * x) for x in range(n)) for n in range(0, 64)}


def _double_free(state: int, n_sites: int) -> bool:
    return (state & _UP_MASKS[n_sites]) & (state >> 1) == 0


def make_basis(n_sites: int, N: int, constraint: str = "none") -> ManyBodyBasis:
    if constraint not in ("none", "gutzwiller"):
        raise ValueError(f"unknown constraint {constraint!r}")
    if not 1 <= N <= 2 * n_sites:
        raise ValueError(f"N={N} out of range for {n_sites} sites")
    states = []
    for pts in itertools.combinations(range(2 * n_sites), N):
        st = sum(1 << p for p in pts)
        if constraint == "gutzwiller" and not _double_free(st, n_sites):
            continue
        states.append(st)
    if not states:
        raise ValueError("empty effective space: no configuration without double occupancy")
    states = np.array(states, dtype=np.int64)
    return ManyBodyBasis(n_sites, N, constraint, states, {int(s): i for i, s in enumerate(states)})


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """Sparse Hamiltonian with bookkeeping for spin sectors.

    Rows are ordered electron-major: row = e * n_boson + k.
    """

    matrix: sp.csr_matrix
    basis: ManyBodyBasis
    n_boson: int = 1
    b: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def two_sz(self) -> np.ndarray:
        return np.repeat(self.basis.two_sz, self.n_boson)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _hop_sign(state: int, a: int, b: int) -> int:
    lo, hi = (a, b) if a < b else (b, a)
    between = state & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1 if bin(between).count("1") & 1 else 1


def hopping_terms(lat: Lattice, basis: ManyBodyBasis):
    """Yield (row, col, x, y, sign) for c*_{x s} c_{y s} acting on basis states."""
    n = lat.size
    edges = lat.directed_edges()
    for col, st in enumerate(basis.states):
        st = int(st)
        for x, y in edges:
            for s in (0, 1):
                a, b = 2 * x + s, 2 * y + s
                if not (st >> b & 1) or (st >> a & 1):
                    continue
                new = st ^ (1 << a) ^ (1 << b)
                row = basis.index.get(new)
                if row is None:
                    continue
                yield row, col, x, y, _hop_sign(st, a, b)


def _check_phases(lat: Lattice, phases):
    if phases is None:
        return None
    a = np.asarray(phases, dtype=float)
    if a.shape != (lat.size, lat.size):
        raise ValueError("magnetic potential must be an |L|x|L| array")
    if not np.allclose(a, -a.T, rtol=0, atol=1e-14):
        raise ValueError("magnetic potential must be antisymmetric")
    off = (lat.hopping == 0) & (a != 0)
    if np.any(off):
        raise ValueError("magnetic potential defined on a non-edge")
    return a


def diagonal_energies(lat: Lattice, params: ModelParams, basis: ManyBodyBasis,
                      potential=None, include_U=True) -> np.ndarray:
    occ = basis.occupations()
    n_x = occ.sum(axis=2).astype(float)
    doubles = (occ[:, :, 0] * occ[:, :, 1]).sum(axis=1).astype(float)
    Uxy = params.offsite(lat.size)
    e = np.einsum("kx,xy,ky->k", n_x, Uxy, n_x)
    if include_U:
        e = e + params.U * doubles
    e = e - params.b * basis.two_sz
    if potential is not None:
        e = e + n_x @ np.asarray(potential, dtype=float)
    return e


def _electron_hamiltonian(lat, params, basis, phases=None, potential=None, include_U=True):
    alpha = _check_phases(lat, phases)
    rows, cols, vals = [], [], []
    for row, col, x, y, sgn in hopping_terms(lat, basis):
        amp = -lat.hopping[x, y] * sgn
        if alpha is not None:
            amp = amp * np.exp(1j * alpha[x, y])
        rows.append(row)
        cols.append(col)
        vals.append(amp)
    dim = len(basis)
    diag = diagonal_energies(lat, params, basis, potential, include_U)
    dtype = complex if alpha is not None else float
    h = sp.coo_matrix((np.array(vals, dtype=dtype), (rows, cols)), shape=(dim, dim)).tocsr()
    return h + sp.diags(diag.astype(dtype))


def build_hubbard(lat: Lattice, params: ModelParams, N: int, phases=None,
                  constraint: str = "none", potential=None) -> HamiltonianMatrix:
    """Hubbard Hamiltonian on the N-electron space.

    With ``constraint='gutzwiller'`` the result is P_G H^{U=0} P_G on the
    no-double-occupancy subspace, so U is ignored.
    """
    if not 1 <= N <= 2 * lat.size:
        raise ValueError(f"N={N} out of range")
    basis = make_basis(lat.size, N, constraint)
    h = _electron_hamiltonian(lat, params, basis, phases, potential,
                              include_U=(constraint == "none"))
    return HamiltonianMatrix(h, basis, 1, params.b)


def gutzwiller_indices(basis: ManyBodyBasis) -> np.ndarray:
    return np.array([k for k, st in enumerate(basis.states) if _double_free(int(st), basis.n_sites)],
                    dtype=np.int64)


def gutzwiller_project(H: HamiltonianMatrix) -> HamiltonianMatrix:
    """Restrict an unconstrained operator to the no-double-occupancy subspace."""
    if H.basis.constraint != "none":
        raise ValueError("projection expects an unconstrained basis")
    keep_e = gutzwiller_indices(H.basis)
    if len(keep_e) == 0:
        raise ValueError("empty effective space: no configuration without double occupancy")
    keep = (keep_e[:, None] * H.n_boson + np.arange(H.n_boson)[None, :]).ravel()
    sub = H.matrix[keep][:, keep].tocsr()
    states = H.basis.states[keep_e]
    basis = ManyBodyBasis(H.basis.n_sites, H.basis.N, "gutzwiller", states,
                          {int(s): i for i, s in enumerate(states)})
    return HamiltonianMatrix(sub, basis, H.n_boson, H.b)


def resolvent_gap(lat: Lattice, params: ModelParams, N: int, U_list, z=None) -> list[float]:
    z = params.z if z is None else z
    if abs(complex(z).imag) == 0:
        raise ValueError("spectral parameter z must be non-real")
    U_list = list(U_list)
    if any(u <= 0 for u in U_list) or U_list != sorted(U_list):
        raise ValueError("U_list must be positive and ascending")
    full = build_hubbard(lat, _replace(params, U=0.0), N)
    if len(full.basis) > DENSE_CAP:
        raise InfeasibleOracle(f"dimension {len(full.basis)} above dense cap")
    keep = gutzwiller_indices(full.basis)
    h_inf = gutzwiller_project(full).toarray()
    r_inf = np.zeros((len(full.basis), len(full.basis)), dtype=complex)
    r_inf[np.ix_(keep, keep)] = np.linalg.inv(h_inf - z * np.eye(len(keep)))
    occ = full.basis.occupations()
    doubles = (occ[:, :, 0] * occ[:, :, 1]).sum(axis=1)
    h0 = full.toarray()
    out = []
    for u in U_list:
        r = np.linalg.inv(h0 + np.diag(u * doubles) - z * np.eye(len(doubles)))
        out.append(float(np.linalg.norm(r - r_inf, ord=2)))
    return out


def _replace(params: ModelParams, **kw) -> ModelParams:
    d = dict(U=params.U, U_offsite=params.U_offsite, b=params.b, beta=params.beta, z=params.z)
    d.update(kw)
    return ModelParams(**d)


# ---------------------------------------------------------------- bosons

def boson_states(n_modes: int, n_max: int, truncation: str = "site") -> list[tuple]:
    states = [s for s in itertools.product(range(n_max + 1), repeat=n_modes)
              if truncation == "site" or sum(s) <= n_max]
    return states


def boson_operators(states):
    """Annihilation operators b_m and the number operator on a truncated basis."""
    index = {s: i for i, s in enumerate(states)}
    n_modes = len(states[0]) if states else 0
    dim = len(states)
    ops = []
    for m in range(n_modes):
        rows, cols, vals = [], [], []
        for i, s in enumerate(states):
            if s[m] == 0:
                continue
            t = list(s)
            t[m] -= 1
            rows.append(index[tuple(t)])
            cols.append(i)
            vals.append(math.sqrt(s[m]))
        ops.append(sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr())
    number = sp.diags(np.array([sum(s) for s in states], dtype=float))
    return ops, number


def _electron_number_ops(basis: ManyBodyBasis):
    occ = basis.occupations().sum(axis=2).astype(float)
    return [sp.diags(occ[:, x]) for x in range(basis.n_sites)]


def _dim_guard(dim: int, cap: int | None):
    if cap is not None and dim > cap:
        raise InfeasibleOracle(f"basis dimension {dim} exceeds cap {cap}")


def build_holstein_hubbard(lat: Lattice, params: ModelParams, phonon: PhononParams, N: int,
                           constraint: str = "none", cap: int | None = 200_000) -> HamiltonianMatrix:
    """Holstein-Hubbard Hamiltonian with truncated phonons, one mode per site."""
    g = np.asarray(phonon.g, dtype=float)
    if g.shape != (lat.size, lat.size):
        raise ValueError("g must be |L|x|L|")
    he = build_hubbard(lat, params, N, constraint=constraint)
    ph = boson_states(lat.size, phonon.n_max, phonon.truncation)
    _dim_guard(len(he.basis) * len(ph), cap)
    bops, number = boson_operators(ph)
    n_ops = _electron_number_ops(he.basis)
    nb = len(ph)
    h = sp.kron(he.matrix, sp.identity(nb)) + phonon.omega * sp.kron(sp.identity(len(he.basis)), number)
    disp = [b + b.T for b in bops]
    for x in range(lat.size):
        for y in range(lat.size):
            if g[x, y] != 0:
                h = h + g[x, y] * sp.kron(n_ops[x], disp[y])
    return HamiltonianMatrix(h.tocsr(), he.basis, nb, params.b)


def lang_firsov_effective(params: ModelParams, phonon: PhononParams):
    """Effective couplings after the Lang-Firsov transformation.

    Returns (U_eff, zeta). U_eff has the local coupling on its diagonal and
    the offsite couplings elsewhere. zeta[x, y] is the site vector xi_x - xi_y
    with xi_x = (g_xy / omega)_y.
    """
    g = np.asarray(phonon.g, dtype=float)
    n = g.shape[0]
    g2 = g @ g
    u_eff = params.offsite(n) - g2 / phonon.omega
    np.fill_diagonal(u_eff, params.U - 2.0 * np.diag(g2) / phonon.omega)
    xi = g / phonon.omega
    zeta = xi[:, None, :] - xi[None, :, :]
    return u_eff, zeta


def polaron_shift(phonon: PhononParams) -> np.ndarray:
    """One-body energy -omega^{-1} sum_z g_xz^2 left over by completing the square."""
    g = np.asarray(phonon.g, dtype=float)
    return -(g * g).sum(axis=1) / phonon.omega


def _exp_i_field(q_eig, coeff):
    w, v = q_eig
    return (v * np.exp(1j * coeff * w)) @ v.conj().T


def build_lang_firsov(lat: Lattice, params: ModelParams, phonon: PhononParams, N: int,
                      constraint: str = "none", cap: int | None = 50_000) -> HamiltonianMatrix:
    """Lang-Firsov transformed Holstein-Hubbard Hamiltonian (per-site truncation).

    The hop x <- y carries exp(i sqrt2 zeta_xy . P) with P the momentum
    quadrature of each phonon mode.
    """
    if phonon.truncation != "site":
        raise ValueError("Lang-Firsov builder needs per-site truncation")
    u_eff, zeta = lang_firsov_effective(params, phonon)
    off = u_eff.copy()
    np.fill_diagonal(off, 0.0)
    diagU = np.diag(u_eff)
    basis = make_basis(lat.size, N, constraint)
    nb1 = phonon.n_max + 1
    nb = nb1 ** lat.size
    _dim_guard(len(basis) * nb, cap)
    a = np.diag(np.sqrt(np.arange(1, nb1)), 1)
    p = (a - a.T) / (1j * math.sqrt(2.0))
    p_eig = np.linalg.eigh(p)
    shift = polaron_shift(phonon)
    # diagonal: site-dependent local coupling plus offsite and polaron shift
    occ = basis.occupations()
    n_x = occ.sum(axis=2).astype(float)
    doubles = (occ[:, :, 0] * occ[:, :, 1]).astype(float)
    diag = np.einsum("kx,xy,ky->k", n_x, off, n_x) - params.b * basis.two_sz + n_x @ shift
    if constraint == "none":
        diag = diag + doubles @ diagU
    cache = {}

    def factor(x, y):
        if (x, y) not in cache:
            mats = [_exp_i_field(p_eig, math.sqrt(2.0) * zeta[x, y, z]) for z in range(lat.size)]
            m = mats[0]
            for extra in mats[1:]:
                m = np.kron(m, extra)
            cache[(x, y)] = sp.csr_matrix(m)
        return cache[(x, y)]

    dim = len(basis)
    h = sp.kron(sp.diags(diag), sp.identity(nb))
    ops, number = boson_operators(boson_states(lat.size, phonon.n_max, "site"))
    h = h + phonon.omega * sp.kron(sp.identity(dim), number)
    terms = {}
    for row, col, x, y, sgn in hopping_terms(lat, basis):
        terms.setdefault((x, y), []).append((row, col, -lat.hopping[x, y] * sgn))
    for (x, y), lst in terms.items():
        r, c, v = zip(*lst)
        e = sp.coo_matrix((v, (r, c)), shape=(dim, dim))
        h = h + sp.kron(e, factor(x, y))
    return HamiltonianMatrix(h.tocsr(), basis, nb, params.b)


def rad_zero_mode_coupling(lat: Lattice, photon: PhotonParams) -> np.ndarray:
    """Directed edge coupling c[x, y] of each k = 0 polarization mode.

    The straight-segment line integral of the zero-mode function from x to y:
    rho(0) m0^{-1/2} eps . (y - x) with eps_j = 1/sqrt(3).
    """
    coords = np.zeros((lat.size, 3))
    coords[:, :lat.spec.d] = lat.coords
    rho0 = photon.charge / math.sqrt(lat.size)
    proj = coords.sum(axis=1) / math.sqrt(3.0)
    c = rho0 / math.sqrt(photon.m0) * (proj[None, :] - proj[:, None])
    return np.where(lat.hopping > 0, c, 0.0)


def build_rad_single_mode(lat: Lattice, params: ModelParams, photon: PhotonParams, N: int,
                          constraint: str = "none", cap: int | None = 200_000) -> HamiltonianMatrix:
    """Hubbard model coupled to the two k = 0 photon modes."""
    if lat.spec.d > 3:
        raise ValueError("photon coupling requires d <= 3")
    if photon.kappa >= 2 * math.pi / photon.L:
        raise ValueError("single-mode builder requires kappa < 2 pi / L")
    basis = make_basis(lat.size, N, constraint)
    nb1 = photon.n_max + 1
    nb = nb1 * nb1
    dim = len(basis)
    _dim_guard(dim * nb, cap)
    a = np.diag(np.sqrt(np.arange(1, nb1)), 1)
    q_eig = np.linalg.eigh((a + a.T) / math.sqrt(2.0))
    c = rad_zero_mode_coupling(lat, photon)
    diag = diagonal_energies(lat, params, basis, include_U=(constraint == "none"))
    h = sp.kron(sp.diags(diag), sp.identity(nb))
    num1 = np.arange(nb1, dtype=float)
    h = h + photon.m0 * sp.kron(sp.identity(dim), sp.diags(np.add.outer(num1, num1).ravel()))
    terms = {}
    for row, col, x, y, sgn in hopping_terms(lat, basis):
        terms.setdefault((x, y), []).append((row, col, -lat.hopping[x, y] * sgn))
    for (x, y), lst in terms.items():
        r, cc, v = zip(*lst)
        e1 = _exp_i_field(q_eig, c[x, y])
        e = sp.coo_matrix((v, (r, cc)), shape=(dim, dim))
        h = h + sp.kron(e, sp.csr_matrix(np.kron(e1, e1)))
    return HamiltonianMatrix(h.tocsr(), basis, nb, params.b)


# ---------------------------------------------------------------- thermal

@dataclass
class SectorSpectra:
    """Eigenvalues per S^3 sector, with the field term removed.

    Because S^3 commutes with every Hamiltonian here, Z(beta, b) for any b is
    sum_m exp(2 beta b m) Z_m(beta; b = 0).
    """

    levels: dict  # two_m -> eigenvalues at b = 0

    def sector_traces(self, beta: float, b: float = 0.0) -> dict:
        return {tm: float(np.exp(-beta * ev).sum() * math.exp(beta * b * tm))
                for tm, ev in self.levels.items()}

    def log_terms(self, beta, b):
        out = []
        for tm, ev in self.levels.items():
            out.append((-beta * ev + beta * b * tm, tm))
        return out

    def partition(self, beta: float, b: float = 0.0) -> float:
        return float(sum(self.sector_traces(beta, b).values()))

    def magnetization(self, beta: float, b: float) -> float:
        """<S^3> computed with a common energy shift for stability."""
        terms = self.log_terms(beta, b)
        top = max(float(t.max()) for t, _ in terms)
        num = den = 0.0
        for t, tm in terms:
            w = np.exp(t - top).sum()
            num += 0.5 * tm * w
            den += w
        return float(num / den)


def check_hermitian(H) -> None:
    m = H.matrix if isinstance(H, HamiltonianMatrix) else H
    if sp.issparse(m):
        dev = abs(m - m.getH()).max() if m.nnz else 0.0
        scale = abs(m).max() if m.nnz else 1.0
    else:
        dev = np.abs(m - m.conj().T).max()
        scale = np.abs(m).max()
    if dev > HERMITIAN_TOL * max(scale, 1.0):
        raise ValueError(f"matrix is not Hermitian (deviation {dev:.3g})")


def sector_spectra(H: HamiltonianMatrix, cap: int = DENSE_CAP) -> SectorSpectra:
    check_hermitian(H)
    tsz = H.two_sz
    levels = {}
    for tm in sorted(set(tsz.tolist())):
        idx = np.flatnonzero(tsz == tm)
        if len(idx) > cap:
            raise InfeasibleOracle(f"sector 2m={tm} has dimension {len(idx)} > cap {cap}")
        block = H.matrix[idx][:, idx].toarray()
        ev = np.linalg.eigvalsh(block)
        levels[tm] = ev + H.b * tm  # remove the -2 b S^3 term
    return SectorSpectra(levels)


@dataclass
class ThermalResult:
    Z: float
    expectations: dict
    sector_Z: dict  # m (float) -> Z_M(beta; m)
    std_error: float = 0.0
    method: str = "ed"


def thermal(H: HamiltonianMatrix, beta: float, observables=(), cap: int = DENSE_CAP) -> ThermalResult:
    """Thermal averages of S^3-conserving observables.

    ``observables`` holds names ("S3", "double_occupancy") or (name, matrix)
    pairs; matrices must commute with S^3, only their sector blocks are used.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    check_hermitian(H)
    tsz = H.two_sz
    sectors = {}
    Z = 0.0
    obs = {}
    named = []
    for o in observables:
        if isinstance(o, str):
            if o == "S3":
                named.append(("S3", sp.diags(0.5 * tsz.astype(float)).tocsr()))
            elif o == "double_occupancy":
                occ = H.basis.occupations()
                d = np.repeat((occ[:, :, 0] * occ[:, :, 1]).sum(axis=1), H.n_boson)
                named.append((o, sp.diags(d.astype(float)).tocsr()))
            else:
                raise ValueError(f"unknown observable {o!r}")
        else:
            named.append((o[0], sp.csr_matrix(o[1])))
    acc = {name: 0.0 for name, _ in named}
    for tm in sorted(set(tsz.tolist())):
        idx = np.flatnonzero(tsz == tm)
        if len(idx) > cap:
            raise InfeasibleOracle(f"sector 2m={tm} has dimension {len(idx)} > cap {cap}")
        block = H.matrix[idx][:, idx].toarray()
        w, v = np.linalg.eigh(block)
        boltz = np.exp(-beta * w)
        zm = float(boltz.sum())
        sectors[tm / 2] = zm
        Z += zm
        for name, m in named:
            mb = m[idx][:, idx].toarray()
            diag = np.einsum("ij,ik,kj->j", v.conj(), mb, v).real
            acc[name] += float(boltz @ diag)
    for name in acc:
        obs[name] = acc[name] / Z
    return ThermalResult(Z, obs, sectors)


# ---------------------------------------------------------------- hard-core normalization

def hardcore_basis(n_sites: int, N: int, constraint: str):
    """Unordered N-point configurations (sorted point tuples) of the constraint class."""
    out = []
    for pts in itertools.combinations(range(2 * n_sites), N):
        if constraint == "u-infinity" and len({p // 2 for p in pts}) < N:
            continue
        out.append(pts)
    return out


def hardcore_generator(lat: Lattice, N: int, constraint: str) -> np.ndarray:
    """Matrix of L on the symmetric hard-core space: sum_j d(x_j) minus hops."""
    states = hardcore_basis(lat.size, N, constraint)
    index = {s: i for i, s in enumerate(states)}
    dim = len(states)
    _dim_guard(dim, DENSE_CAP)
    L = np.zeros((dim, dim))
    for i, s in enumerate(states):
        L[i, i] = sum(lat.degrees[p // 2] for p in s)
        occupied = set(s)
        sites = {p // 2 for p in s}
        for j, p in enumerate(s):
            x, spin = divmod(p, 2)
            for y in lat.neighbors(x):
                q = 2 * int(y) + spin
                if q in occupied:
                    continue
                if constraint == "u-infinity" and int(y) in sites:
                    continue
                new = tuple(sorted(s[:j] + (q,) + s[j + 1:]))
                L[index[new], i] -= lat.hopping[x, y]
    return L


def hardcore_trace(lat: Lattice, N: int, beta: float, constraint: str = "finite-u") -> float:
    """Tr over the symmetric hard-core space of exp(-beta L)."""
    L = hardcore_generator(lat, N, constraint)
    return float(np.exp(-beta * np.linalg.eigvalsh(L)).sum())
