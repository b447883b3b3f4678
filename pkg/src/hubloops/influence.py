"""Gaussian influence functionals of the phonon and photon fields.

The Bose field is integrated out in closed form. For a path whose jumps at
times t_i carry mode couplings c_m(i), the weight is W = exp(-Q/2) with
Q = sum_m sum_{i,j} K_m(t_i, t_j) c_m(i) c_m(j) and K_m the thermal
two-point function of a Segal field quadrature of frequency omega_m.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ed import PhononParams, PhotonParams, lang_firsov_effective
from .lattice import Lattice
from .worldline import Bundle, influence_q


def kernel(beta: float, omega: float, s: float, t: float) -> float:
    if not (beta > 0 and omega > 0):
        raise ValueError("beta and omega must be positive")
    if not (0.0 <= s <= beta and 0.0 <= t <= beta):
        raise ValueError("times must lie in [0, beta]")
    dt = abs(t - s)
    return 0.5 * (math.exp(-(beta - dt) * omega) + math.exp(-dt * omega)) / (-math.expm1(-beta * omega))


def kernel_matrix(beta: float, omega: float, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    dt = np.abs(times[:, None] - times[None, :])
    return 0.5 * (np.exp(-(beta - dt) * omega) + np.exp(-dt * omega)) / (-math.expm1(-beta * omega))


@dataclass(frozen=True, eq=False)
class BoseModeSet:
    """Modes with frequencies ``omega[m]`` and directed hop couplings ``C[m, x, y]``.

    ``physical`` lists the frequencies of the oscillators whose free
    partition function multiplies the path integral.
    """

    omega: np.ndarray
    C: np.ndarray
    tag: str
    physical: np.ndarray
    labels: tuple = ()

    @property
    def n_modes(self) -> int:
        return len(self.omega)

    def free_partition(self, beta: float) -> float:
        return float(np.prod(1.0 / -np.expm1(-beta * self.physical)))

    def log_free_partition(self, beta: float) -> float:
        return float(-np.log(-np.expm1(-beta * self.physical)).sum())


def empty_modes(lat: Lattice) -> BoseModeSet:
    return BoseModeSet(np.zeros(0), np.zeros((0, lat.size, lat.size)), "none", np.zeros(0))


def phonon_modes(lat: Lattice, phonon: PhononParams) -> BoseModeSet:
    """One mode per site at frequency omega.

    A hop x -> y couples to mode z with sqrt(2) (xi_x - xi_y)_z: the
    Lang-Firsov phase exp(i sqrt2 zeta.P) written in Segal normalization.
    """
    _, zeta = lang_firsov_effective(_zero_params(), phonon)
    n = lat.size
    C = np.zeros((n, n, n))
    for x, y in lat.directed_edges():
        C[:, x, y] = math.sqrt(2.0) * zeta[x, y]
    omega = np.full(n, float(phonon.omega))
    labels = tuple(f"site{z}" for z in range(n))
    return BoseModeSet(omega, C, "phonon", omega.copy(), labels)


def _zero_params():
    from .ed import ModelParams
    return ModelParams()


def momentum_grid(photon: PhotonParams) -> list[np.ndarray]:
    step = 2 * math.pi / photon.L
    nmax = int(math.floor(photon.kappa / step))
    out = []
    for n in itertools.product(range(-nmax, nmax + 1), repeat=3):
        k = step * np.array(n, dtype=float)
        if np.linalg.norm(k) <= photon.kappa:
            out.append(k)
    return out


def polarizations(k: np.ndarray):
    if k[0] == 0 and k[1] == 0:
        e = np.full(3, 1.0 / math.sqrt(3.0))
        return e, e.copy()
    e1 = np.array([k[1], -k[0], 0.0]) / math.hypot(k[0], k[1])
    e2 = np.cross(k / np.linalg.norm(k), e1)
    return e1, e2


def segment_integrals(k: np.ndarray, a: np.ndarray, b: np.ndarray):
    """(int_0^1 cos(k.r(s)) ds, int_0^1 sin(k.r(s)) ds) on r(s) = a + s(b - a)."""
    ka = float(k @ a)
    kd = float(k @ (b - a))
    # midpoint form avoids cancellation when kd is tiny
    mid = ka + 0.5 * kd
    sc = float(np.sinc(kd / (2 * math.pi)))
    return math.cos(mid) * sc, math.sin(mid) * sc


def photon_modes(lat: Lattice, photon: PhotonParams) -> BoseModeSet:
    """Cos and sin families for both polarizations of every retained k.

    Coupling of hop x -> y is the straight-segment line integral from x to y
    of the corresponding mode function.
    """
    if lat.spec.d > 3:
        raise ValueError("photon coupling requires d <= 3")
    coords = np.zeros((lat.size, 3))
    coords[:, :lat.spec.d] = lat.coords
    rho = photon.charge / math.sqrt(lat.size)
    ks = momentum_grid(photon)
    omegas, mats, labels, phys = [], [], [], []
    edges = lat.directed_edges()
    for k in ks:
        kn = float(np.linalg.norm(k))
        w = photon.m0 if kn == 0 else kn
        phys.extend([w, w])
        pref = rho / math.sqrt(w)
        for lam, eps in enumerate(polarizations(k), start=1):
            cmat = np.zeros((lat.size, lat.size))
            smat = np.zeros((lat.size, lat.size))
            for x, y in edges:
                ic, is_ = segment_integrals(k, coords[x], coords[y])
                proj = float(eps @ (coords[y] - coords[x]))
                cmat[x, y] = pref * proj * ic
                smat[x, y] = pref * proj * is_
            for fam, m in (("cos", cmat), ("sin", smat)):
                omegas.append(w)
                mats.append(m)
                labels.append(f"k={tuple(float(v) + 0.0 for v in np.round(k, 12))},pol={lam},{fam}")
    return BoseModeSet(np.array(omegas), np.array(mats), "photon", np.array(phys), tuple(labels))


def coupling_bound(lat: Lattice, photon: PhotonParams, mode_index: int, modes: BoseModeSet) -> float:
    """rho(k)/sqrt(omega(k)) for the given mode."""
    return photon.charge / math.sqrt(lat.size) / math.sqrt(modes.omega[mode_index])


def _bundle_arrays(bundle: Bundle):
    return (bundle.times.astype(float), bundle.src.astype(np.int64), bundle.dst.astype(np.int64))


def influence_q_bundle(bundle: Bundle, modes: BoseModeSet, beta: float, times=None) -> float:
    t, src, dst = _bundle_arrays(bundle)
    if times is not None:
        t = np.asarray(times, dtype=float)
    if modes.n_modes == 0 or len(t) == 0:
        return 0.0
    if np.any(t < 0) or np.any(t > beta):
        raise ValueError("jump times outside [0, beta]")
    return float(influence_q(t, src, dst, len(t), float(beta), modes.omega, modes.C))


def influence_weight(bundle: Bundle, modes: BoseModeSet, beta: float) -> float:
    return math.exp(-0.5 * influence_q_bundle(bundle, modes, beta))


def snapped_times(times, beta: float, n: int) -> np.ndarray:
    """Each time moved to the right edge of its dyadic bin of width beta/2^n."""
    bins = 2 ** n
    idx = np.ceil(np.asarray(times, dtype=float) * bins / beta)
    return np.minimum(idx, bins) * beta / bins


def discretization_convergence(bundle: Bundle, modes: BoseModeSet, beta: float, n: int) -> list[float]:
    """Q_1, ..., Q_n with jump times snapped to dyadic bin edges."""
    if n > 20:
        raise ValueError("n must be <= 20")
    return [influence_q_bundle(bundle, modes, beta, snapped_times(bundle.times, beta, j))
            for j in range(1, n + 1)]


def dump_modes_csv(modes: BoseModeSet, lat: Lattice, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mode", "label", "omega", "from", "to", "coupling"])
        for m in range(modes.n_modes):
            lab = modes.labels[m] if modes.labels else str(m)
            for x, y in lat.directed_edges():
                wr.writerow([m, lab, repr(float(modes.omega[m])), x, y, repr(float(modes.C[m, x, y]))])
