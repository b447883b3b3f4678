"""A model instance with matching Monte Carlo inputs and exact oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ed
from .configgraph import representatives
from .influence import BoseModeSet, empty_modes, phonon_modes, photon_modes
from .lattice import Lattice
from .worldline import KernelInputs


@dataclass(eq=False)
class Model:
    """Hubbard, Holstein-Hubbard or lattice-QED Hubbard instance.

    ``U = math.inf`` selects the hard-core (Gutzwiller-projected) model.
    """

    lattice: Lattice
    N: int
    U: float = 0.0
    U_offsite: np.ndarray | None = None
    phases: np.ndarray | None = None
    phonon: ed.PhononParams | None = None
    photon: ed.PhotonParams | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.phonon is not None and self.photon is not None:
            raise ValueError("a model has either phonons or photons, not both")
        if self.phases is not None and (self.phonon is not None or self.photon is not None):
            raise ValueError("static magnetic phases are only supported for the pure Hubbard model")
        cap = self.lattice.size if self.hard_core else 2 * self.lattice.size
        if not 1 <= self.N <= cap:
            raise ValueError(f"N={self.N} outside 1..{cap} for this constraint class")

    @property
    def hard_core(self) -> bool:
        return math.isinf(self.U)

    @property
    def constraint(self) -> str:
        return "u-infinity" if self.hard_core else "finite-u"

    @property
    def kind(self) -> str:
        if self.phonon is not None:
            return "holstein"
        if self.photon is not None:
            return "rad"
        return "hubbard"

    def params(self, b: float = 0.0, beta: float = 1.0) -> ed.ModelParams:
        U = 0.0 if self.hard_core else float(self.U)
        return ed.ModelParams(U=U, U_offsite=self.U_offsite, b=b, beta=beta)

    # ---------------------------------------------------------------- MC side

    def modes(self) -> BoseModeSet:
        if "modes" not in self._cache:
            if self.phonon is not None:
                m = phonon_modes(self.lattice, self.phonon)
            elif self.photon is not None:
                m = photon_modes(self.lattice, self.photon)
            else:
                m = empty_modes(self.lattice)
            self._cache["modes"] = m
        return self._cache["modes"]

    def representatives(self) -> np.ndarray:
        if "reps" not in self._cache:
            self._cache["reps"] = np.array(representatives(self.lattice.size, self.N, self.constraint),
                                           dtype=np.int64)
        return self._cache["reps"]

    def kernel_inputs(self) -> KernelInputs:
        """Effective couplings seen by the world lines.

        For phonons these are the Lang-Firsov couplings plus the one-body
        polaron shift; the Peierls phases become influence couplings.
        """
        n = self.lattice.size
        p = self.params()
        U = 0.0 if self.hard_core else float(self.U)
        Uxy = p.offsite(n)
        v = np.zeros(n)
        if self.phonon is not None:
            u_eff, _ = ed.lang_firsov_effective(p, self.phonon)
            if not self.hard_core:
                diag = np.diag(u_eff)
                if not np.allclose(diag, diag[0]):
                    raise ValueError("site-dependent local coupling is not supported by the sampler")
                U = float(diag[0])
            Uxy = u_eff - np.diag(np.diag(u_eff))
            v = ed.polaron_shift(self.phonon)
        m = self.modes()
        return KernelInputs(self.lattice, self.N, self.representatives(), U=U, Uxy=Uxy, v=v,
                            alpha=self.phases, omega=m.omega, C=m.C)

    def norm(self, beta: float) -> float:
        """Trace of exp(-beta L) over the symmetric hard-core space."""
        return ed.hardcore_trace(self.lattice, self.N, beta, self.constraint)

    def free_boson(self, beta: float) -> float:
        return self.modes().free_partition(beta)

    # ---------------------------------------------------------------- ED side

    def hamiltonian(self, b: float = 0.0, phonon_nmax: int | None = None,
                    photon_nmax: int | None = None, cap: int | None = 200_000) -> ed.HamiltonianMatrix:
        constraint = "gutzwiller" if self.hard_core else "none"
        p = self.params(b)
        if self.phonon is not None:
            ph = self.phonon
            if phonon_nmax is not None:
                ph = ed.PhononParams(ph.omega, ph.g, phonon_nmax, ph.truncation)
            return ed.build_holstein_hubbard(self.lattice, p, ph, self.N, constraint, cap)
        if self.photon is not None:
            pt = self.photon
            if photon_nmax is not None:
                pt = ed.PhotonParams(pt.L, pt.kappa, pt.m0, photon_nmax, pt.charge)
            if pt.kappa >= 2 * math.pi / pt.L:
                raise ed.InfeasibleOracle("multi-mode photon models have no exact oracle")
            return ed.build_rad_single_mode(self.lattice, p, pt, self.N, constraint, cap)
        return ed.build_hubbard(self.lattice, p, self.N, self.phases, constraint)

    def spectra(self, **kw) -> ed.SectorSpectra:
        key = ("spectra", tuple(sorted(kw.items())))
        if key not in self._cache:
            self._cache[key] = ed.sector_spectra(self.hamiltonian(**kw))
        return self._cache[key]

    def truncation_levels(self) -> tuple:
        if self.phonon is not None:
            return ("phonon_nmax", self.phonon.n_max)
        if self.photon is not None:
            return ("photon_nmax", self.photon.n_max)
        return (None, None)
