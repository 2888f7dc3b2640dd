"""Householder band reduction of the Dicke coupling matrix, plus oracles.

Step ``i`` (1-based) reflects rows ``N_a+i .. N`` so that column ``i`` has no
entries below row ``N_a+i``. Reflectors never touch the first ``N_a``
coordinates, so atoms are left alone and the accumulated ``Q`` keeps an exact
identity atom block.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import BandCouplingMatrix, DickeCouplingMatrix, TransformRecord


class DegenerateReductionWarning(UserWarning):
    """Issued when there are no more modes than atoms."""


@dataclass
class HouseholderStep:
    """One reflector ``I - 2 v v^T / (v^T v)``; ``skip`` marks the identity."""

    index: int
    v: np.ndarray
    alpha: float
    skip: bool = False

    def matrix(self) -> np.ndarray:
        n = self.v.size
        if self.skip:
            return np.eye(n)
        return np.eye(n) - 2.0 * np.outer(self.v, self.v) / (self.v @ self.v)


@dataclass
class ChainCoefficients:
    """Chain frequencies ``xi`` (length n) and hoppings ``t`` (length n-1)."""

    xi: np.ndarray
    t: np.ndarray
    coupling: float = 0.0
    length: int = field(init=False)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.length = self.xi.size


def _sgn(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


def householder_vector(intermediate: np.ndarray, i: int, atom_count: int,
                       skip_tol: float = 1e-14, scale: float | None = None) -> HouseholderStep:
    """Reflector for step ``i`` built from column ``i`` of the intermediate matrix.

    The active window is rows ``atom_count+i .. N`` (1-based). When everything
    below the pivot is already zero (2-norm at most ``skip_tol * scale``, scale
    defaulting to the largest matrix entry) the step is an identity skip; this
    also covers an all-zero window, where the reflector would be undefined.
    """
    a = np.asarray(intermediate)
    n = a.shape[0]
    if not 1 <= i <= n - atom_count - 1:
        raise ValueError(f"step index {i} out of range 1..{n - atom_count - 1}")
    col = i - 1
    r0 = atom_count + i - 1
    m = a[r0:, col]
    v = np.zeros(n)
    if scale is None:
        scale = float(np.max(np.abs(a)))
    if np.linalg.norm(m[1:]) <= skip_tol * scale:
        return HouseholderStep(index=i, v=v, alpha=float(m[0]), skip=True)
    alpha = -_sgn(m[0]) * np.linalg.norm(m)
    v[r0:] = m
    v[r0] -= alpha
    return HouseholderStep(index=i, v=v, alpha=float(alpha))


def apply_householder_step(matrix: np.ndarray, step: HouseholderStep, atom_count: int | None = None,
                           out: np.ndarray | None = None) -> np.ndarray:
    """Return ``Q_i A Q_i^T`` via the symmetric rank-2 update ``A - v w^T - w v^T``.

    Entries the step annihilates are stored as exact zeros. Pass ``out=A`` to
    update in place.
    """
    a = np.array(matrix, dtype=float) if out is None else out
    if step.skip:
        return a
    v = step.v
    beta = 2.0 / (v @ v)
    p = beta * (a @ v)
    w = p - (0.5 * beta * (v @ p)) * v
    a -= np.outer(v, w) + np.outer(w, v)
    if atom_count is not None:
        col = step.index - 1
        r0 = atom_count + step.index - 1
        a[r0 + 1:, col] = 0.0
        a[col, r0 + 1:] = 0.0
        a[r0, col] = a[col, r0] = step.alpha
    return a


def band_reduce(dicke: DickeCouplingMatrix | np.ndarray, atom_count: int | None = None):
    """Orthogonally reduce a Dicke coupling matrix to bandwidth ``atom_count``.

    Returns ``(band, record)`` with ``band.data == Q @ M_D @ Q.T``. With no
    more modes than atoms the input is returned unchanged, ``Q = I`` and
    ``record.degenerate`` is set.
    """
    if isinstance(dicke, (DickeCouplingMatrix, BandCouplingMatrix)):
        data = dicke.data
        na = dicke.atom_count if atom_count is None else atom_count
    else:
        data = np.asarray(dicke, dtype=float)
        if atom_count is None:
            raise ValueError("atom_count required for a bare matrix")
        na = atom_count
    n = data.shape[0]
    m = n - na
    a = np.array(data, dtype=float)
    q = np.eye(n)
    if m <= na:
        warnings.warn(
            f"{na - m + 1} atom(s) remain coupled to all modes (M={m} <= N_a={na}); "
            "coupling matrix returned unchanged",
            DegenerateReductionWarning,
            stacklevel=2,
        )
        return BandCouplingMatrix(data=a, atom_count=na), TransformRecord(q=q, atom_count=na, degenerate=True)

    steps = []
    scale = float(np.max(np.abs(a)))
    for i in range(1, m):
        step = householder_vector(a, i, na, scale=scale)
        steps.append(step)
        if step.skip:
            # roundoff-level residue below the pivot, and the pivot itself if tiny
            a[na + i:, i - 1] = 0.0
            a[i - 1, na + i:] = 0.0
            if abs(a[na + i - 1, i - 1]) <= 1e-14 * scale:
                a[na + i - 1, i - 1] = a[i - 1, na + i - 1] = 0.0
            continue
        apply_householder_step(a, step, na, out=a)
        v = step.v
        q -= (2.0 / (v @ v)) * np.outer(v, v @ q)
    return BandCouplingMatrix(data=a, atom_count=na), TransformRecord(q=q, atom_count=na, steps=steps)


def chain_coefficients(band: BandCouplingMatrix) -> ChainCoefficients:
    """Read a single-atom band matrix as chain coefficients."""
    if band.atom_count != 1:
        raise ValueError("chain coefficients need exactly one atom")
    b = band.boson_block
    return ChainCoefficients(xi=np.diag(b), t=np.diag(b, 1), coupling=float(band.rho[0, 0]))


def lanczos_chain_map_oracle(dicke: DickeCouplingMatrix, breakdown_tol: float = 1e-13) -> ChainCoefficients:
    """Chain mapping of a single atom by Lanczos on the boson block.

    The Krylov sequence is seeded with the normalized coupling vector and every
    new vector is reorthogonalized against all previous ones by modified
    Gram-Schmidt (two passes). On breakdown the shortened chain is returned.
    """
    if dicke.atom_count != 1:
        raise ValueError("Lanczos chain mapping is defined for a single atom")
    h = dicke.data[1:, 1:]
    g = dicke.data[0, 1:]
    m = g.size
    norm_g = np.linalg.norm(g)
    if norm_g == 0.0:
        raise ValueError("atom is decoupled; chain is undefined")
    scale = max(np.max(np.abs(h)), norm_g)
    basis = np.zeros((m, m))
    basis[0] = g / norm_g
    xi, t = [], []
    for n in range(m):
        v = basis[n]
        w = h @ v
        xi.append(float(v @ w))
        if n == m - 1:
            break
        w = w - xi[-1] * v
        if n > 0:
            w = w - t[-1] * basis[n - 1]
        for _ in range(2):
            for k in range(n + 1):
                w -= (basis[k] @ w) * basis[k]
        beta = np.linalg.norm(w)
        if beta <= breakdown_tol * scale:
            break
        t.append(float(beta))
        basis[n + 1] = w / beta
    return ChainCoefficients(xi=xi, t=t, coupling=float(norm_g))


@dataclass
class BandReport:
    max_outside_band: float
    outside_location: tuple[int, int] | None
    max_asymmetry: float
    atom_block_deviation: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_outside_band": self.max_outside_band,
            "outside_location": None if self.outside_location is None else list(self.outside_location),
            "max_asymmetry": self.max_asymmetry,
            "atom_block_deviation": self.atom_block_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def validate_band_structure(band: BandCouplingMatrix, tolerance: float = 1e-10,
                            atom_frequencies: np.ndarray | None = None) -> BandReport:
    """Check bandwidth, symmetry and the atom block.

    ``tolerance`` is relative to the largest entry of the matrix. The atom
    block must be diagonal, and equal ``atom_frequencies`` when given.
    """
    a = np.asarray(band.data, dtype=float)
    na = band.atom_count
    n = a.shape[0]
    scale = max(float(np.max(np.abs(a))), 1e-300) if a.size else 1.0
    rows, cols = np.indices((n, n))
    outside = np.where(np.abs(rows - cols) > na, np.abs(a), 0.0)
    max_out = float(outside.max()) if n else 0.0
    loc = None
    if max_out > 0.0:
        r, c = np.unravel_index(np.argmax(outside), outside.shape)
        loc = (int(r), int(c))
    asym = float(np.max(np.abs(a - a.T))) if n else 0.0
    block = a[:na, :na]
    target = np.diag(np.diag(block)) if atom_frequencies is None else np.diag(atom_frequencies)
    atom_dev = float(np.max(np.abs(block - target))) if na else 0.0
    tol = tolerance * scale
    passed = max_out <= tol and asym <= tol and atom_dev <= tol
    return BandReport(max_out, loc, asym, atom_dev, tolerance, passed)


def symmetric_spectrum(matrix: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Ascending eigenvalues of a real symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a)))) if n else 1.0
    if n and np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * max(np.linalg.norm(a), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = _sgn(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = a[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(a))
