"""Exact state-vector simulation in the truncated Fock space.

Site order is ``[atom_1 .. atom_Na, boson_1 .. boson_M]``. Atoms use the basis
``(|g>, |e>)`` so ``sigma_z = diag(-1, 1)``; bosons keep Fock states
``|0> .. |N_f - 1>`` with a hard cutoff (``b^dagger`` kills the top state).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .model import BandCouplingMatrix, DickeCouplingMatrix, SystemSpec

DEFAULT_DIMENSION_CAP = 2 ** 24


class DimensionCapError(RuntimeError):
    """Raised when a Hilbert space exceeds the configured dimension cap."""


class NormDriftError(RuntimeError):
    """Raised when the integrator drifts off the unit sphere; ``step`` says where."""

    def __init__(self, step: int, drift: float):
        super().__init__(f"norm drift {drift:.3e} at step {step}; reduce dt")
        self.step = step
        self.drift = drift


# -- local operators ------------------------------------------------------

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]])
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]])
SIGMA_MINUS = SIGMA_PLUS.T.copy()


def annihilation(nf: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, nf, dtype=float)), 1)


@dataclass(frozen=True)
class LocalOperatorSet:
    fock_cutoff: int

    @property
    def sx(self):
        return SIGMA_X

    @property
    def sz(self):
        return SIGMA_Z

    @property
    def sp(self):
        return SIGMA_PLUS

    @property
    def sm(self):
        return SIGMA_MINUS

    @property
    def b(self):
        return annihilation(self.fock_cutoff)

    @property
    def bdag(self):
        return annihilation(self.fock_cutoff).T.copy()

    @property
    def n(self):
        return np.diag(np.arange(self.fock_cutoff, dtype=float))

    @property
    def quadrature(self):
        """``-i (b - b^dagger)``, the Hermitian factor of the dipole coupling."""
        b = annihilation(self.fock_cutoff)
        return -1j * (b - b.T)


@dataclass(frozen=True)
class HilbertSpaceLayout:
    atom_count: int
    mode_count: int
    fock_cutoff: int
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        if self.atom_count < 0 or self.mode_count < 0:
            raise ValueError("site counts must be nonnegative")
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")

    @property
    def dims(self) -> tuple[int, ...]:
        return (2,) * self.atom_count + (self.fock_cutoff,) * self.mode_count

    @property
    def site_count(self) -> int:
        return self.atom_count + self.mode_count

    @property
    def dimension(self) -> int:
        # python ints: no overflow
        return 2 ** self.atom_count * self.fock_cutoff ** self.mode_count

    def check_cap(self) -> None:
        if self.dimension > self.dimension_cap:
            raise DimensionCapError(
                f"Hilbert dimension {self.dimension} exceeds cap {self.dimension_cap} "
                f"(N_a={self.atom_count}, M={self.mode_count}, N_f={self.fock_cutoff})"
            )

    def boson_site(self, k: int) -> int:
        return self.atom_count + k

    def index(self, occupations: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def occupations(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def product_state(self, local_states: Sequence[np.ndarray]) -> np.ndarray:
        """Kronecker product of per-site vectors."""
        return reduce(np.kron, [np.asarray(v, dtype=complex) for v in local_states])


# -- Hamiltonians -----------------------------------------------------------

@dataclass
class SparseHamiltonian:
    """Sum of ``coefficient * (x)_site factor`` terms over a layout."""

    layout: HilbertSpaceLayout
    terms: list[tuple[complex, dict[int, np.ndarray]]] = field(default_factory=list)
    _compiled: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.layout.dimension

    def add(self, coefficient, factors: dict[int, np.ndarray]) -> None:
        if coefficient != 0:
            self.terms.append((coefficient, factors))
            self._compiled = None

    def term_matrix(self, factors: dict[int, np.ndarray]) -> sp.csr_matrix:
        mats = []
        for site, d in enumerate(self.layout.dims):
            op = factors.get(site)
            mats.append(sp.identity(d, format="csr") if op is None else sp.csr_matrix(op))
        return reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)

    def compile(self, hermitian_tol: float = 1e-12) -> sp.csr_matrix:
        if self._compiled is None:
            self.layout.check_cap()
            dim = self.dimension
            h = sp.csr_matrix((dim, dim), dtype=complex)
            for coef, factors in self.terms:
                h = h + coef * self.term_matrix(factors)
            h.sum_duplicates()
            h.eliminate_zeros()
            resid = hermiticity_residual(h)
            if resid > hermitian_tol:
                raise ValueError(f"Hamiltonian is not Hermitian (residual {resid:.3e})")
            self._compiled = h.tocsr()
        return self._compiled

    def dense(self) -> np.ndarray:
        return self.compile().toarray()


def hermiticity_residual(h) -> float:
    diff = (h - h.conj().T)
    if sp.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.max(np.abs(diff)))


def _coupling_hamiltonian(atom_freqs, boson_block, atom_boson, layout: HilbertSpaceLayout) -> SparseHamiltonian:
    """Generic form: atoms, a real symmetric boson block and dipole couplings."""
    ops = LocalOperatorSet(layout.fock_cutoff)
    na, m = layout.atom_count, layout.mode_count
    if len(atom_freqs) != na or boson_block.shape != (m, m) or atom_boson.shape != (na, m):
        raise ValueError("coupling data inconsistent with layout")
    h = SparseHamiltonian(layout)
    quad = ops.quadrature
    for j in range(na):
        h.add(atom_freqs[j] / 2.0, {j: ops.sz})
    for j in range(na):
        for k in range(m):
            h.add(atom_boson[j, k], {j: ops.sx, na + k: quad})
    for k in range(m):
        h.add(boson_block[k, k], {na + k: ops.n})
    for k in range(m):
        for l in range(k + 1, m):
            t = boson_block[k, l]
            if t != 0.0:
                h.add(t, {na + k: ops.bdag, na + l: ops.b})
                h.add(t, {na + k: ops.b, na + l: ops.bdag})
    return h


def build_dicke_hamiltonian(spec: SystemSpec | DickeCouplingMatrix, layout: HilbertSpaceLayout) -> SparseHamiltonian:
    """Multimode Dicke Hamiltonian with counter-rotating terms kept."""
    if isinstance(spec, DickeCouplingMatrix):
        na = spec.atom_count
        return _coupling_hamiltonian(spec.atom_frequencies, np.diag(spec.mode_frequencies), spec.coupling, layout)
    layout.check_cap()
    return _coupling_hamiltonian(spec.atom_frequencies, np.diag(spec.mode_frequencies), spec.coupling, layout)


def build_band_hamiltonian(band: BandCouplingMatrix, layout: HilbertSpaceLayout) -> SparseHamiltonian:
    """Band Hamiltonian: atoms couple to chain bosons ``1..j``, hoppings within ``N_a``."""
    layout.check_cap()
    na = band.atom_count
    return _coupling_hamiltonian(band.atom_frequencies, band.boson_block, band.rho, layout)


# -- states and evolution -------------------------------------------------

@dataclass
class StateVector:
    amplitudes: np.ndarray
    layout: HilbertSpaceLayout
    time: float = 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)


ATOM_STATES = {"g": np.array([1.0, 0.0]), "e": np.array([0.0, 1.0])}


def atomic_initial_state(name: str, atom_count: int, amplitudes=None) -> np.ndarray:
    """Atomic part of a named initial state as a length ``2**atom_count`` vector.

    ``psi1 = (|ee> + |gg>)/sqrt2``, ``psi2 = (|eg> + |ge>)/sqrt2``,
    ``psi3 = (|e> + |g>)(|e> + |g>)/2``; ``all_excited`` and ``all_ground`` are
    product states; ``custom`` takes explicit (normalized) amplitudes.
    """
    g, e = ATOM_STATES["g"], ATOM_STATES["e"]
    if name in ("psi1", "psi2", "psi3") and atom_count != 2:
        raise ValueError(f"{name} is a two-atom state")
    if name == "psi1":
        return (np.kron(e, e) + np.kron(g, g)) / math.sqrt(2)
    if name == "psi2":
        return (np.kron(e, g) + np.kron(g, e)) / math.sqrt(2)
    if name == "psi3":
        return np.kron(e + g, e + g) / 2.0
    if name == "all_excited":
        return reduce(np.kron, [e] * atom_count)
    if name == "all_ground":
        return reduce(np.kron, [g] * atom_count)
    if name == "custom":
        vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if vec.size != 2 ** atom_count:
            raise ValueError("custom amplitudes must have length 2**atom_count")
        if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
            raise ValueError("custom amplitudes are not normalized")
        return vec
    raise ValueError(f"unknown initial state {name!r}")


def initial_state(layout: HilbertSpaceLayout, name: str, amplitudes=None) -> StateVector:
    """Named atomic state times the photon vacuum."""
    atoms = atomic_initial_state(name, layout.atom_count, amplitudes)
    vac = np.zeros(layout.fock_cutoff ** layout.mode_count, dtype=complex)
    vac[0] = 1.0
    return StateVector(np.kron(atoms, vac), layout)


def iter_evolve(h: SparseHamiltonian | sp.spmatrix, psi0: StateVector, dt: float, steps: int,
                stride: int = 1, drift_tol: float = 1e-8) -> Iterator[StateVector]:
    """Yield ``psi(t)`` every ``stride`` RK4 steps, starting with ``psi0``.

    The integrator runs with the initial energy subtracted (a global phase,
    restored on output) which keeps the RK4 amplitude error small.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 0 or stride < 1:
        raise ValueError("steps must be >= 0 and stride >= 1")
    mat = h.compile() if isinstance(h, SparseHamiltonian) else sp.csr_matrix(h)
    psi = np.array(psi0.amplitudes, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state is not normalized")
    e0 = float(np.real(np.vdot(psi, mat @ psi)))
    a = (-1j * (mat - e0 * sp.identity(mat.shape[0], format="csr"))).tocsr()
    t0 = psi0.time
    yield StateVector(psi.copy(), psi0.layout, t0)
    half = 0.5 * dt
    for n in range(1, steps + 1):
        k1 = a @ psi
        k2 = a @ (psi + half * k1)
        k3 = a @ (psi + half * k2)
        k4 = a @ (psi + dt * k3)
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = abs(np.linalg.norm(psi) - 1.0)
        if drift > drift_tol:
            raise NormDriftError(n, drift)
        if n % stride == 0 or n == steps:
            t = t0 + n * dt
            yield StateVector(psi * np.exp(-1j * e0 * (t - t0)), psi0.layout, t)


def evolve(h, psi0: StateVector, dt: float, steps: int, stride: int = 1, drift_tol: float = 1e-8) -> list[StateVector]:
    return list(iter_evolve(h, psi0, dt, steps, stride, drift_tol))


def default_dt(spec_or_freqs) -> float:
    """``2 pi / (200 * omega_max)`` with ``omega_max`` the largest mode frequency."""
    freqs = getattr(spec_or_freqs, "mode_frequencies", spec_or_freqs)
    return 2.0 * math.pi / (200.0 * float(np.max(freqs)))


# -- observables ----------------------------------------------------------

def _atom_marginals(psi: StateVector) -> np.ndarray:
    """Probabilities over the atomic configurations, photons summed out."""
    na = psi.layout.atom_count
    amps = psi.amplitudes.reshape(2 ** na, -1)
    probs = np.sum(np.abs(amps) ** 2, axis=1)
    return probs / np.sum(probs)


def atomic_population(psi: StateVector, j: int) -> float:
    """``<sigma^+_j sigma^-_j>`` for 0-based atom ``j``."""
    na = psi.layout.atom_count
    if not 0 <= j < na:
        raise IndexError(f"atom index {j} out of range")
    probs = _atom_marginals(psi).reshape((2,) * na)
    return float(np.sum(np.take(probs, 1, axis=j)))


def two_atom_components(psi: StateVector) -> np.ndarray:
    """Weights of ``gg, ge, eg, ee`` summed over photon configurations."""
    if psi.layout.atom_count != 2:
        raise ValueError("two_atom_components needs exactly two atoms")
    return _atom_marginals(psi)


def atom_reduced_density_matrix(psi: StateVector) -> np.ndarray:
    na = psi.layout.atom_count
    amps = psi.amplitudes.reshape(2 ** na, -1)
    rho = amps @ amps.conj().T
    return rho / np.trace(rho).real


def energy(h, psi: StateVector) -> float:
    mat = h.compile() if isinstance(h, SparseHamiltonian) else h
    v = psi.amplitudes
    return float(np.real(np.vdot(v, mat @ v)) / np.real(np.vdot(v, v)))


def top_fock_occupancy(psi: StateVector) -> float:
    """Largest probability of any mode sitting in its top Fock state."""
    t = np.abs(psi.tensor()) ** 2
    na, m = psi.layout.atom_count, psi.layout.mode_count
    worst = 0.0
    for k in range(m):
        worst = max(worst, float(np.sum(np.take(t, -1, axis=na + k))))
    return worst
