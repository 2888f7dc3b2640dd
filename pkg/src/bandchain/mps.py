"""Matrix product states and TEBD for the band Hamiltonian.

Sites follow the exact module: ``[atom_1 .. atom_Na, boson_1 .. boson_M]``.
Site tensors have legs ``(left bond, physical, right bond)``. The state keeps
a single canonical center; truncation never renormalizes, so the squared norm
drops by exactly the discarded weight.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from . import exact
from .exact import HilbertSpaceLayout, LocalOperatorSet, SIGMA_PLUS, SIGMA_MINUS, SIGMA_X, SIGMA_Z
from .model import BandCouplingMatrix, SystemSpec, TransformRecord, mode_profile

DENSE_GATE_CAP = 4096


class GateTooLargeError(RuntimeError):
    """Raised when a gate exceeds the dense exponentiation cap."""


class NonFiniteStateError(RuntimeError):
    """Raised when a gate update produces NaN or inf."""


# -- truncation -------------------------------------------------------------

@dataclass
class TruncationPolicy:
    """Bond truncation rule plus a running ledger of discarded weight.

    Per bond, the smallest number of singular values is kept such that the
    dropped squared weight is at most ``cutoff`` times the total, never more
    than ``chi_max``. ``discarded`` accumulates the absolute dropped weight.
    """

    chi_max: int = 128
    cutoff: float = 1e-10
    discarded: float = 0.0
    truncations: int = 0
    max_bond: int = 1

    def keep(self, s: np.ndarray) -> int:
        s2 = s * s
        total = float(np.sum(s2))
        if total == 0.0:
            return 1
        # tail[i] = weight dropped when keeping the first i values
        tail = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]])
        allowed = np.nonzero(tail <= self.cutoff * total)[0]
        k = max(int(allowed[0]), 1)
        k = min(k, self.chi_max, s.size)
        dropped = float(tail[k])
        if dropped > 0.0:
            self.discarded += dropped
            self.truncations += 1
        self.max_bond = max(self.max_bond, k)
        return k

    def reset(self) -> None:
        self.discarded = 0.0
        self.truncations = 0
        self.max_bond = 1


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


# -- MPS ----------------------------------------------------------------------

class MPS:
    """Open-boundary MPS with a movable orthogonality center."""

    def __init__(self, tensors: Sequence[np.ndarray], center: int = 0,
                 singular_values: Sequence[np.ndarray | None] | None = None):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.center = center
        n = len(self.tensors)
        self.singular_values = list(singular_values) if singular_values is not None else [None] * (n - 1)

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "MPS":
        tensors = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            tensors.append(v.reshape(1, -1, 1) / np.linalg.norm(v))
        return cls(tensors, center=0, singular_values=[np.ones(1) for _ in range(len(tensors) - 1)])

    @classmethod
    def from_dense(cls, psi: np.ndarray, dims: Sequence[int], tol: float = 1e-14) -> "MPS":
        """Exact left-to-right SVD factorization; singular values below ``tol`` are dropped."""
        rest = np.asarray(psi, dtype=complex).reshape(1, -1)
        tensors, svals = [], []
        chi = 1
        for d in dims[:-1]:
            mat = rest.reshape(chi * d, -1)
            u, s, vh = _svd(mat)
            k = max(1, int(np.sum(s > tol * max(s[0], 1e-300))))
            tensors.append(u[:, :k].reshape(chi, d, k))
            svals.append(s[:k])
            rest = s[:k, None] * vh[:k]
            chi = k
        tensors.append(rest.reshape(chi, dims[-1], 1))
        return cls(tensors, center=len(dims) - 1, singular_values=svals)

    def copy(self) -> "MPS":
        return MPS([t.copy() for t in self.tensors], self.center,
                   [None if s is None else s.copy() for s in self.singular_values])

    @property
    def site_count(self) -> int:
        return len(self.tensors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def norm_squared(self) -> float:
        return float(np.real(np.vdot(self.tensors[self.center], self.tensors[self.center])))

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def move_center(self, site: int) -> None:
        if not 0 <= site < self.site_count:
            raise IndexError(f"site {site} out of range")
        while self.center < site:
            c = self.center
            a = self.tensors[c]
            chil, d, chir = a.shape
            q, r = np.linalg.qr(a.reshape(chil * d, chir))
            self.tensors[c] = q.reshape(chil, d, q.shape[1])
            self.tensors[c + 1] = np.tensordot(r, self.tensors[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > site:
            c = self.center
            a = self.tensors[c]
            chil, d, chir = a.shape
            q, r = np.linalg.qr(a.reshape(chil, d * chir).T)
            self.tensors[c] = q.T.reshape(q.shape[1], d, chir)
            self.tensors[c - 1] = np.tensordot(self.tensors[c - 1], r.T, axes=(2, 0))
            self.center -= 1

    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(-1, 0))
        return psi.reshape(-1)

    def isometry_residual(self) -> float:
        """Largest deviation from left (right) isometry left (right) of the center."""
        worst = 0.0
        for i, a in enumerate(self.tensors):
            chil, d, chir = a.shape
            if i < self.center:
                m = a.reshape(chil * d, chir)
                worst = max(worst, float(np.max(np.abs(m.conj().T @ m - np.eye(chir)))))
            elif i > self.center:
                m = a.reshape(chil, d * chir)
                worst = max(worst, float(np.max(np.abs(m @ m.conj().T - np.eye(chil)))))
        return worst

    def _contract(self, start: int, n: int) -> np.ndarray:
        theta = self.tensors[start]
        for i in range(1, n):
            theta = np.tensordot(theta, self.tensors[start + i], axes=(-1, 0))
        return theta

    def _split(self, theta: np.ndarray, start: int, dims: Sequence[int], policy: TruncationPolicy,
               direction: str) -> None:
        """Factor ``theta`` (chiL, D, chiR) back into sites with truncating SVDs."""
        n = len(dims)
        chil, chir = theta.shape[0], theta.shape[-1]
        if n == 1:
            self.tensors[start] = theta.reshape(chil, dims[0], chir)
            self.center = start
            return
        if direction == "right":
            rest = theta.reshape(chil, -1)
            chi = chil
            for i in range(n - 1):
                mat = rest.reshape(chi * dims[i], -1)
                u, s, vh = _svd(mat)
                k = policy.keep(s)
                self.tensors[start + i] = u[:, :k].reshape(chi, dims[i], k)
                self.singular_values[start + i] = s[:k].copy()
                rest = s[:k, None] * vh[:k]
                chi = k
            self.tensors[start + n - 1] = rest.reshape(chi, dims[-1], chir)
            self.center = start + n - 1
        else:
            rest = theta.reshape(-1, chir)
            chi = chir
            for i in range(n - 1, 0, -1):
                mat = rest.reshape(-1, dims[i] * chi)
                u, s, vh = _svd(mat)
                k = policy.keep(s)
                self.tensors[start + i] = vh[:k].reshape(k, dims[i], chi)
                self.singular_values[start + i - 1] = s[:k].copy()
                rest = u[:, :k] * s[None, :k]
                chi = k
            self.tensors[start] = rest.reshape(chil, dims[0], chi)
            self.center = start

    def apply_operator(self, start: int, op: np.ndarray, policy: TruncationPolicy,
                       direction: str = "right") -> None:
        """Apply a dense operator on sites ``start .. start+n-1`` and re-split."""
        dims = []
        total = 1
        i = start
        while total < op.shape[0]:
            dims.append(self.dims[i])
            total *= self.dims[i]
            i += 1
        if total != op.shape[0]:
            raise ValueError("operator dimension does not match site dimensions")
        end = start + len(dims) - 1
        if self.center < start:
            self.move_center(start)
        elif self.center > end:
            self.move_center(end)
        theta = self._contract(start, len(dims))
        chil, chir = theta.shape[0], theta.shape[-1]
        mat = theta.reshape(chil, total, chir).transpose(1, 0, 2).reshape(total, chil * chir)
        mat = op.apply(mat) if isinstance(op, BlockUnitary) else op @ mat
        new = mat.reshape(total, chil, chir).transpose(1, 0, 2)
        if not np.all(np.isfinite(new)):
            raise NonFiniteStateError(f"non-finite tensor after gate on sites {start}..{end}")
        self._split(new, start, dims, policy, direction)


def init_product_mps(layout: HilbertSpaceLayout, initial_state: str = "all_excited", amplitudes=None) -> MPS:
    """Named atomic state (see ``exact.atomic_initial_state``) times photon vacuum."""
    atoms = exact.atomic_initial_state(initial_state, layout.atom_count, amplitudes)
    atom_mps = MPS.from_dense(atoms, (2,) * layout.atom_count)
    vac = np.zeros(layout.fock_cutoff)
    vac[0] = 1.0
    tensors = atom_mps.tensors + [vac.reshape(1, -1, 1).astype(complex) for _ in range(layout.mode_count)]
    svals = atom_mps.singular_values + [np.ones(1) for _ in range(layout.mode_count)]
    return MPS(tensors, center=layout.atom_count - 1, singular_values=svals)


def mps_to_state(mps: MPS, layout: HilbertSpaceLayout, t: float = 0.0) -> exact.StateVector:
    return exact.StateVector(mps.to_dense(), layout, t)


# -- gates and schedule ---------------------------------------------------

def _embed(dims: Sequence[int], factors: dict[int, np.ndarray]) -> np.ndarray:
    mats = [factors.get(i, np.eye(d)) for i, d in enumerate(dims)]
    return reduce(np.kron, mats)


@dataclass
class Gate:
    """Local generator on consecutive sites ``start .. start+len(dims)-1``."""

    start: int
    dims: tuple[int, ...]
    generator: np.ndarray
    label: str
    boson_only: bool = False

    @property
    def span(self) -> int:
        return len(self.dims)

    @property
    def stop(self) -> int:
        return self.start + self.span - 1


class BlockUnitary:
    """Block-diagonal operator stored as ``(indices, block)`` pairs."""

    def __init__(self, dim: int, blocks: list[tuple[np.ndarray, np.ndarray]]):
        self.dim = dim
        self.blocks = blocks
        self.shape = (dim, dim)
        self._dense: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        if self._dense is None:
            u = np.zeros((self.dim, self.dim), dtype=complex)
            for idx, blk in self.blocks:
                u[np.ix_(idx, idx)] = blk
            self._dense = u
        return self._dense

    def apply(self, mat: np.ndarray) -> np.ndarray:
        """``U @ mat`` for ``mat`` of shape (dim, k)."""
        if len(self.blocks) == 1:
            return self.blocks[0][1] @ mat
        out = np.empty_like(mat)
        for idx, blk in self.blocks:
            out[idx] = blk @ mat[idx]
        return out


def exponentiate_gate_blocks(generator: np.ndarray, dt: float, cap: int = DENSE_GATE_CAP,
                             hermitian_tol: float = 1e-12) -> BlockUnitary:
    """``exp(-i G dt)`` by Hermitian eigendecomposition of each decoupled block of ``G``.

    Blocks are the connected components of the nonzero pattern (photon-number
    sectors for hopping gates), so this is exact.
    """
    g = np.asarray(generator)
    dim = g.shape[0]
    if dim > cap:
        raise GateTooLargeError(f"gate dimension {dim} exceeds dense cap {cap}")
    if g.size and np.max(np.abs(g - g.conj().T)) > hermitian_tol:
        raise ValueError("gate generator is not Hermitian")
    nblocks, labels = connected_components(np.abs(g) > 0, directed=False)
    blocks = []
    for b in range(nblocks):
        idx = np.nonzero(labels == b)[0]
        w, v = np.linalg.eigh(g[np.ix_(idx, idx)])
        blocks.append((idx, (v * np.exp(-1j * w * dt)) @ v.conj().T))
    return BlockUnitary(dim, blocks)


def exponentiate_gate(generator: np.ndarray, dt: float, cap: int = DENSE_GATE_CAP,
                      hermitian_tol: float = 1e-12) -> np.ndarray:
    """Dense unitary ``exp(-i G dt)`` (see :func:`exponentiate_gate_blocks`)."""
    return exponentiate_gate_blocks(generator, dt, cap, hermitian_tol).dense()


@dataclass
class TrotterSchedule:
    """Gate layers plus the second-order symmetric step sequence.

    ``sequence`` lists ``(layer, fraction of dt)`` pairs for one step: every
    layer but the last at ``dt/2`` forward, the last at ``dt``, then the others
    at ``dt/2`` in reverse.
    """

    layers: list[list[Gate]]
    dt: float
    layout: HilbertSpaceLayout
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def sequence(self) -> list[tuple[int, float]]:
        p = len(self.layers)
        if p == 1:
            return [(0, 1.0)]
        fwd = [(i, 0.5) for i in range(p - 1)]
        return fwd + [(p - 1, 1.0)] + fwd[::-1]

    @property
    def gates(self) -> list[Gate]:
        return [g for layer in self.layers for g in layer]

    def unitary(self, layer: int, index: int, fraction: float) -> "BlockUnitary":
        key = (layer, index, round(fraction, 12))
        if key not in self._cache:
            gate = self.layers[layer][index]
            self._cache[key] = exponentiate_gate_blocks(gate.generator, fraction * self.dt)
        return self._cache[key]

    def generator_sum(self) -> np.ndarray:
        """Sum of all gate generators embedded in the full (small) Hilbert space."""
        dims = self.layout.dims
        total = np.zeros((self.layout.dimension,) * 2, dtype=complex)
        for g in self.gates:
            left = int(np.prod(dims[: g.start], dtype=np.int64))
            right = int(np.prod(dims[g.stop + 1:], dtype=np.int64))
            total += np.kron(np.kron(np.eye(left), g.generator), np.eye(right))
        return total

    def summary(self) -> dict:
        return {
            "dt": self.dt,
            "layers": [[{"label": g.label, "start": g.start, "span": g.span} for g in layer]
                       for layer in self.layers],
            "sequence": self.sequence,
        }


def build_boson_gate(band: BandCouplingMatrix, fock_cutoff: int, k: int) -> Gate:
    """Gate of chain boson ``k`` (0-based): ``xi_k n_k`` plus its hoppings to the next N_a sites."""
    na, m = band.atom_count, band.mode_count
    if not 0 <= k < m:
        raise IndexError(f"boson index {k} out of range")
    ops = LocalOperatorSet(fock_cutoff)
    bb = band.boson_block
    span = min(na + 1, m - k)
    dims = (fock_cutoff,) * span
    gen = bb[k, k] * _embed(dims, {0: ops.n}).astype(complex)
    for j in range(1, span):
        t = bb[k, k + j]
        if t != 0.0:
            hop = _embed(dims, {0: ops.bdag, j: ops.b})
            gen = gen + t * (hop + hop.T)
    return Gate(na + k, dims, gen, f"boson{k + 1}", boson_only=True)


def build_gate_layers(band: BandCouplingMatrix, layout: HilbertSpaceLayout, dt: float,
                      atom_gates: str = "bundled", band_tol: float = 1e-12) -> TrotterSchedule:
    """Split the band Hamiltonian into (N_a+1)-site boson gates and atom gates.

    Boson gate ``k`` carries ``xi_k n_k`` and the hoppings ``t_{k,k+j}``,
    ``j = 1..N_a``, on chain sites ``k..k+N_a`` (shorter at the chain end);
    these gates go into ``N_a+1`` layers by ``k mod (N_a+1)``.

    ``atom_gates="bundled"`` puts every atomic term into one gate on
    ``[atom_1 .. atom_Na, boson_1 .. boson_Na]``, which keeps exchange
    symmetries of the atoms exact under Trotterization. ``"per_atom"`` gives
    atom ``j`` its own gate on ``[atom_j .. atom_Na, boson_1 .. boson_j]``
    (intervening atoms as identities), one layer each.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    na, m = band.atom_count, band.mode_count
    if (layout.atom_count, layout.mode_count) != (na, m):
        raise ValueError("layout does not match band matrix")
    data = band.data
    rows, cols = np.indices(data.shape)
    scale = max(float(np.max(np.abs(data))), 1e-300)
    if np.any(np.abs(data[np.abs(rows - cols) > na]) > band_tol * scale):
        raise ValueError("coupling matrix is not banded with bandwidth N_a")
    if m < na:
        raise ValueError("TEBD layering needs at least as many modes as atoms")

    ops = LocalOperatorSet(layout.fock_cutoff)
    nf = layout.fock_cutoff
    rho = band.rho
    wa = band.atom_frequencies
    quad = ops.quadrature

    atom_layers: list[list[Gate]] = []
    if atom_gates == "bundled":
        dims = (2,) * na + (nf,) * na
        gen = np.zeros((int(np.prod(dims)),) * 2, dtype=complex)
        for j in range(na):
            gen += wa[j] / 2.0 * _embed(dims, {j: SIGMA_Z})
            for k in range(j + 1):
                if rho[j, k] != 0.0:
                    gen += rho[j, k] * _embed(dims, {j: SIGMA_X, na + k: quad})
        atom_layers.append([Gate(0, dims, gen, "atoms")])
    elif atom_gates == "per_atom":
        for j in range(na):
            dims = (2,) * (na - j) + (nf,) * (j + 1)
            gen = wa[j] / 2.0 * _embed(dims, {0: SIGMA_Z})
            for k in range(j + 1):
                if rho[j, k] != 0.0:
                    gen = gen + rho[j, k] * _embed(dims, {0: SIGMA_X, na - j + k: quad})
            atom_layers.append([Gate(j, dims, gen, f"atom{j + 1}")])
    else:
        raise ValueError(f"unknown atom gate layout {atom_gates!r}")

    boson_layers: list[list[Gate]] = [[] for _ in range(min(na + 1, m))]
    for k in range(m):
        boson_layers[k % (na + 1)].append(build_boson_gate(band, nf, k))

    layers = atom_layers + [layer for layer in boson_layers if layer]
    return TrotterSchedule(layers=layers, dt=dt, layout=layout)


# -- MPO --------------------------------------------------------------------

def mpo_bond_bound(atom_count: int, fock_cutoff: int) -> int:
    """Largest MPO bond of an (N_a+1)-site boson gate: N_f^N_a (even) or N_f^(N_a+1) (odd)."""
    return fock_cutoff ** atom_count if atom_count % 2 == 0 else fock_cutoff ** (atom_count + 1)


@dataclass
class GateMPO:
    """MPO tensors with legs ``(left bond, out, in, right bond)``."""

    start: int
    dims: tuple[int, ...]
    tensors: list[np.ndarray]
    boson_only: bool = False
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def span(self) -> int:
        return len(self.dims)

    @property
    def bond_dims(self) -> list[int]:
        return [w.shape[3] for w in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        if self._dense is None:
            t = self.tensors[0]
            for w in self.tensors[1:]:
                t = np.tensordot(t, w, axes=(-1, 0))
            # (1, o1, i1, o2, i2, ..., 1) -> (o..., i...)
            n = self.span
            t = t.reshape([d for d in self.dims for _ in range(2)])
            t = t.transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
            dim = int(np.prod(self.dims))
            self._dense = t.reshape(dim, dim)
        return self._dense


def decompose_gate_to_mpo(gate: np.ndarray, dims: Sequence[int], start: int = 0, boson_only: bool = False,
                          atom_count: int | None = None, rel_tol: float = 1e-13) -> GateMPO:
    """Split a dense gate into per-site MPO tensors by sequential SVD.

    Singular values below ``rel_tol`` times the largest are dropped. For
    boson-only gates with ``atom_count`` given, bond dimensions are checked
    against :func:`mpo_bond_bound`.
    """
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    dim = int(np.prod(dims))
    g = np.asarray(gate, dtype=complex)
    if g.shape != (dim, dim):
        raise ValueError("gate dimension does not match site dimensions")
    t = g.reshape(dims + dims)
    order = [i for pair in zip(range(n), range(n, 2 * n)) for i in pair]
    rest = t.transpose(order).reshape(1, -1)
    tensors = []
    wl = 1
    for i, d in enumerate(dims[:-1]):
        mat = rest.reshape(wl * d * d, -1)
        u, s, vh = _svd(mat)
        k = max(1, int(np.sum(s > rel_tol * max(s[0], 1e-300))))
        tensors.append(u[:, :k].reshape(wl, d, d, k))
        rest = s[:k, None] * vh[:k]
        wl = k
    tensors.append(rest.reshape(wl, dims[-1], dims[-1], 1))
    mpo = GateMPO(start, dims, tensors, boson_only=boson_only)
    if boson_only and atom_count is not None:
        bound = mpo_bond_bound(atom_count, dims[0])
        if max(mpo.bond_dims, default=1) > bound:
            raise AssertionError(f"MPO bond {max(mpo.bond_dims)} exceeds bound {bound}")
    return mpo


def mpo_recontraction_residual(mpo: GateMPO, gate: np.ndarray) -> float:
    mpo._dense = None
    return float(np.max(np.abs(mpo.to_dense() - gate)))


def apply_mpo_and_truncate(mps: MPS, gate: GateMPO, policy: TruncationPolicy, direction: str = "right") -> MPS:
    """Apply a gate MPO to the sites it covers and re-split under ``policy``.

    The MPO is recontracted into its dense (cached) operator before acting on
    the merged site tensor: for these few-site gates the MPO bonds saturate,
    so sequential MPO-MPS contraction would cost more than the dense product.
    """
    mps.apply_operator(gate.start, gate.to_dense(), policy, direction)
    return mps


# -- observables ------------------------------------------------------------

def local_expectation(mps: MPS, site: int, op: np.ndarray) -> complex:
    mps.move_center(site)
    a = mps.tensors[site]
    val = np.einsum("asb,ts,atb->", a.conj(), op, a)
    return complex(val / mps.norm_squared())


def atomic_population(mps: MPS, j: int) -> float:
    """``<sigma^+_j sigma^-_j>`` of 0-based atom ``j``."""
    return float(np.real(local_expectation(mps, j, SIGMA_PLUS @ SIGMA_MINUS)))


def two_site_rdm(mps: MPS, first: int = 0) -> np.ndarray:
    """Reduced density matrix of sites ``first`` and ``first+1``, trace normalized."""
    mps.move_center(first)
    theta = mps._contract(first, 2)
    chil, d1, d2, chir = theta.shape
    mat = theta.transpose(1, 2, 0, 3).reshape(d1 * d2, chil * chir)
    rho = mat @ mat.conj().T
    return rho / np.trace(rho).real


def two_atom_components(mps: MPS) -> np.ndarray:
    """Weights of ``gg, ge, eg, ee``: the diagonal of the two-atom density matrix."""
    return np.real(np.diag(two_site_rdm(mps, 0))).copy()


def bond_singular_values(mps: MPS, m: int) -> np.ndarray:
    """Normalized Schmidt values across the cut after the first ``m`` sites."""
    if not 1 <= m < mps.site_count:
        raise IndexError(f"bipartition {m} out of range")
    mps.move_center(m - 1)
    a = mps.tensors[m - 1]
    chil, d, chir = a.shape
    s = np.linalg.svd(a.reshape(chil * d, chir), compute_uv=False)
    mps.singular_values[m - 1] = s.copy()
    return s / np.linalg.norm(s)


def entropy_from_singular_values(s: np.ndarray) -> float:
    p = np.asarray(s, dtype=float) ** 2
    p = p / np.sum(p)
    p = p[p > 0.0]
    return float(max(0.0, -np.sum(p * np.log(p))))


def entanglement_entropy(mps: MPS, m: int) -> float:
    """Von Neumann entropy of the first ``m`` sites (S_1 for m=1, S_{1:2} for m=2)."""
    return entropy_from_singular_values(bond_singular_values(mps, m))


def boson_correlation_matrix(mps: MPS, atom_count: int) -> np.ndarray:
    """``C[i, j] = <b_i^dagger b_j>`` over the chain bosons.

    The center sweeps across the chain; with site ``i`` as center the left
    environment is trivial, so each row costs one pass to the right.
    """
    nsites = mps.site_count
    m = nsites - atom_count
    nf = mps.dims[atom_count] if m else 0
    b = exact.annihilation(nf)
    bdag = b.T
    n_op = bdag @ b
    corr = np.zeros((m, m), dtype=complex)
    mps.move_center(atom_count)
    norm2 = mps.norm_squared()
    for i in range(m):
        site = atom_count + i
        mps.move_center(site)
        a = mps.tensors[site]
        corr[i, i] = np.einsum("asb,ts,atb->", a.conj(), n_op, a)
        # env[bra, ket] after applying b^dagger_i on the ket side
        env = np.einsum("asb,st,atc->bc", a.conj(), bdag, a)
        for j in range(i + 1, m):
            aj = mps.tensors[atom_count + j]
            corr[i, j] = np.einsum("bc,bsd,st,ctd->", env, aj.conj(), b, aj)
            if j < m - 1:
                env = np.einsum("bc,bsd,csf->df", env, aj.conj(), aj)
    corr /= norm2
    upper = np.triu(corr, 1)
    return np.diag(np.diag(corr).real).astype(complex) + upper + upper.conj().T


def field_coefficients(spec: SystemSpec, x: np.ndarray) -> np.ndarray:
    """``c_k(x) = sqrt(omega_k / 2) u_k(x)`` as an (M, len(x)) array."""
    if spec.mode_harmonics is None:
        raise ValueError("spec has no cavity harmonics; field profile undefined")
    return np.sqrt(spec.mode_frequencies / 2.0)[:, None] * mode_profile(spec.mode_harmonics, x)


def field_correlation(state, record: TransformRecord, spec: SystemSpec, x) -> np.ndarray:
    """``<E^- E^+>(x)`` from an MPS (or a precomputed chain correlation matrix)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = record.u
    if u.shape != (spec.mode_count, spec.mode_count):
        raise ValueError("transform record does not match the spec's mode count")
    corr_b = boson_correlation_matrix(state, spec.atom_count) if isinstance(state, MPS) else np.asarray(state)
    if corr_b.shape != u.shape:
        raise ValueError("correlation matrix does not match the spec's mode count")
    corr_a = u.T @ corr_b @ u
    c = field_coefficients(spec, x)
    vals = np.einsum("kx,kl,lx->x", c, corr_a, c)
    return np.real(vals)


# -- TEBD driver ----------------------------------------------------------

@dataclass
class TEBDResult:
    records: list[dict]
    correlation_times: list[float]
    correlation_map: list[np.ndarray]
    discarded_weight: float
    max_bond: int
    wall_time: float
    final_state: MPS | None = None


def _merge_sequence(seq: list[tuple[int, float]]) -> list[tuple[int, float]]:
    out: list[tuple[int, float]] = []
    for layer, frac in seq:
        if out and out[-1][0] == layer:
            out[-1] = (layer, out[-1][1] + frac)
        else:
            out.append((layer, frac))
    return out


def apply_layer(mps: MPS, schedule: TrotterSchedule, layer: int, fraction: float, policy: TruncationPolicy) -> None:
    gates = schedule.layers[layer]
    order = list(range(len(gates)))
    # sweep from whichever end is nearer the current center
    mid = 0.5 * (gates[0].start + gates[-1].stop)
    direction = "right"
    if mps.center > mid:
        order.reverse()
        direction = "left"
    for idx in order:
        gate = gates[idx]
        mps.apply_operator(gate.start, schedule.unitary(layer, idx, fraction), policy, direction)


def tebd_step(mps: MPS, schedule: TrotterSchedule, policy: TruncationPolicy, nsteps: int = 1) -> None:
    """Advance ``nsteps`` second-order steps, merging adjacent half layers."""
    seq = _merge_sequence(schedule.sequence * nsteps)
    for layer, frac in seq:
        apply_layer(mps, schedule, layer, frac, policy)


def default_observables(mps: MPS, atom_count: int, t: float, policy: TruncationPolicy) -> dict:
    rec = {"time": t, "time_periods": t / (2 * math.pi)}
    for j in range(atom_count):
        rec[f"pop{j + 1}"] = atomic_population(mps, j)
    if atom_count == 2:
        comps = two_atom_components(mps)
        for name, v in zip(("gg", "ge", "eg", "ee"), comps):
            rec[name] = float(v)
    rec["S1"] = entanglement_entropy(mps, 1)
    if mps.site_count > 2:
        rec["S12"] = entanglement_entropy(mps, 2)
    rec["norm"] = mps.norm()
    rec["discarded"] = policy.discarded
    rec["max_bond"] = max(mps.bond_dims, default=1)
    return rec


def tebd_run(mps0: MPS, schedule: TrotterSchedule, policy: TruncationPolicy, steps: int, stride: int = 1,
             observables: Callable[[MPS, int, float, TruncationPolicy], dict] | None = None,
             correlation: tuple[SystemSpec, TransformRecord, np.ndarray, int] | None = None,
             progress: Callable[[int, dict], None] | None = None) -> TEBDResult:
    """Evolve ``steps`` TEBD steps, recording observables every ``stride`` steps.

    ``correlation=(spec, record, x, corr_stride)`` additionally samples the field
    correlation map every ``corr_stride`` steps (a multiple of ``stride``).
    """
    if steps < 0 or stride < 1:
        raise ValueError("steps must be >= 0 and stride >= 1")
    obs = observables or default_observables
    na = schedule.layout.atom_count
    mps = mps0.copy()
    t0 = time.perf_counter()
    records, ctimes, cmap = [], [], []

    def sample(n):
        t = n * schedule.dt
        rec = obs(mps, na, t, policy)
        records.append(rec)
        if correlation is not None:
            spec, record, x, cstride = correlation
            if n % cstride == 0 or n == steps:
                ctimes.append(t)
                cmap.append(field_correlation(mps, record, spec, x))
        if progress is not None:
            progress(n, rec)

    sample(0)
    done = 0
    while done < steps:
        chunk = min(stride, steps - done)
        tebd_step(mps, schedule, policy, chunk)
        done += chunk
        sample(done)
    return TEBDResult(records, ctimes, cmap, policy.discarded, policy.max_bond,
                      time.perf_counter() - t0, final_state=mps)
