"""System specifications and coupling matrices for the Dicke and band forms.

Everything is in normalized units: the first atomic frequency is 1, hbar is 1
and the cavity occupies x in [-1/2, 1/2].
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class SpecError(ValueError):
    """Raised when a system specification violates its invariants."""


@dataclass
class SystemSpec:
    """Atoms, modes and the dense atom-mode coupling matrix.

    ``mode_harmonics`` holds the cavity harmonic number of each mode when the
    spec came from a cavity generator; it is only needed for field profiles.
    """

    atom_frequencies: np.ndarray
    mode_frequencies: np.ndarray
    coupling: np.ndarray
    atom_positions: np.ndarray | None = None
    mode_harmonics: np.ndarray | None = None
    generator: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.atom_frequencies = np.asarray(self.atom_frequencies, dtype=float).reshape(-1)
        self.mode_frequencies = np.asarray(self.mode_frequencies, dtype=float).reshape(-1)
        self.coupling = np.atleast_2d(np.asarray(self.coupling, dtype=float))
        if self.atom_positions is not None:
            self.atom_positions = np.asarray(self.atom_positions, dtype=float).reshape(-1)
        if self.mode_harmonics is not None:
            self.mode_harmonics = np.asarray(self.mode_harmonics, dtype=int).reshape(-1)
        self.validate()

    @property
    def atom_count(self) -> int:
        return self.atom_frequencies.size

    @property
    def mode_count(self) -> int:
        return self.mode_frequencies.size

    def validate(self) -> None:
        na, m = self.atom_count, self.mode_count
        if na < 1 or m < 1:
            raise SpecError("need at least one atom and one mode")
        if not np.all(np.isfinite(self.atom_frequencies)) or np.any(self.atom_frequencies <= 0):
            raise SpecError("atom frequencies must be finite and strictly positive")
        if not np.all(np.isfinite(self.mode_frequencies)) or np.any(self.mode_frequencies <= 0):
            raise SpecError("mode frequencies must be finite and strictly positive")
        if np.any(np.diff(self.mode_frequencies) <= 0):
            raise SpecError("mode frequencies must be strictly increasing")
        if self.coupling.shape != (na, m):
            raise SpecError(f"coupling matrix has shape {self.coupling.shape}, expected {(na, m)}")
        if not np.all(np.isfinite(self.coupling)):
            raise SpecError("coupling matrix has non-finite entries")
        if self.atom_positions is not None:
            if self.atom_positions.size != na:
                raise SpecError("one position per atom required")
            if np.any(np.abs(self.atom_positions) > 0.5):
                raise SpecError("atom positions must lie inside the cavity [-1/2, 1/2]")
        if self.mode_harmonics is not None and self.mode_harmonics.size != m:
            raise SpecError("one harmonic number per mode required")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        atoms: dict[str, Any] = {"frequencies": self.atom_frequencies.tolist()}
        if self.atom_positions is not None:
            atoms["positions"] = self.atom_positions.tolist()
        modes: dict[str, Any] = {"frequencies": self.mode_frequencies.tolist()}
        if self.mode_harmonics is not None:
            modes["harmonics"] = self.mode_harmonics.tolist()
        return {
            "atoms": atoms,
            "modes": modes,
            "coupling": self.coupling.tolist(),
            "generator": dict(self.generator),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SystemSpec":
        """Build a spec from its JSON document.

        A document may omit ``coupling`` and carry only a ``generator`` block,
        in which case the named generator is rerun.
        """
        if "coupling" not in doc or doc["coupling"] is None:
            if "generator" not in doc:
                raise SpecError("spec document needs 'coupling' or 'generator'")
            return spec_from_generator(doc["generator"])
        try:
            atoms, modes = doc["atoms"], doc["modes"]
            return cls(
                atom_frequencies=atoms["frequencies"],
                atom_positions=atoms.get("positions"),
                mode_frequencies=modes["frequencies"],
                mode_harmonics=modes.get("harmonics"),
                coupling=doc["coupling"],
                generator=dict(doc.get("generator", {})),
            )
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed spec document: {exc}") from exc

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def mode_profile(harmonic, x):
    """Standing-wave profile ``sin(n pi (x + 1/2))`` of a PEC cavity harmonic.

    Evaluated as ``+-cos(n pi x)`` (odd n) or ``+-sin(n pi x)`` (even n) so that
    parity about the cavity center holds bitwise and nodes are exact zeros.
    Returns an array of shape ``(len(harmonic), len(x))``.
    """
    n = np.atleast_1d(np.asarray(harmonic, dtype=int))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.multiply.outer(n.astype(float), x)
    sin = np.where(y == np.round(y), 0.0, np.sin(np.pi * y))
    cos = np.where(y - 0.5 == np.round(y - 0.5), 0.0, np.cos(np.pi * y))
    sign = np.where((n // 2) % 2 == 0, 1.0, -1.0)[:, None]
    odd = (n % 2 == 1)[:, None]
    return sign * np.where(odd, cos, sin)


def build_periodic_lattice_spec(mode_count: int, coupling_scale: float) -> SystemSpec:
    """Single atom with omega_k = k and g_k = g sqrt(omega_k)."""
    if mode_count < 1:
        raise SpecError("mode_count must be at least 1")
    if not math.isfinite(coupling_scale):
        raise SpecError("coupling scale must be finite")
    omega = np.arange(1, mode_count + 1, dtype=float)
    g = coupling_scale * np.sqrt(omega)
    return SystemSpec(
        atom_frequencies=[1.0],
        mode_frequencies=omega,
        coupling=g[None, :],
        generator={"kind": "periodic_lattice", "mode_count": mode_count, "coupling_scale": coupling_scale},
    )


def build_pec_cavity_spec(
    atom_positions: Sequence[float],
    mode_count: int,
    harmonic_rule: str = "odd",
    coupling_normalization: float = 0.1,
    anchor: str | tuple[int, int] = "max_ratio",
    atom_frequencies: Sequence[float] | None = None,
) -> SystemSpec:
    """Atoms in a 1D PEC cavity with dipole couplings from standing-wave profiles.

    Couplings are ``g0 * sqrt(omega_k / omega_1) * u_n(x_j)``. The prefactor
    ``g0`` is chosen so that either a named ``(atom, mode)`` pair (0-based)
    has ``g/omega_mode == coupling_normalization`` or, with
    ``anchor="max_ratio"``, the largest ``|g_jk / omega_k|`` equals it.
    """
    x = np.asarray(atom_positions, dtype=float).reshape(-1)
    if x.size < 1:
        raise SpecError("need at least one atom position")
    if np.any(~np.isfinite(x)) or np.any(np.abs(x) > 0.5):
        raise SpecError("atom positions must lie inside the cavity [-1/2, 1/2]")
    if mode_count < 1:
        raise SpecError("mode_count must be at least 1")
    if not math.isfinite(coupling_normalization):
        raise SpecError("coupling normalization must be finite")

    k = np.arange(1, mode_count + 1)
    if harmonic_rule == "all":
        harmonics = k
    elif harmonic_rule == "odd":
        harmonics = 2 * k - 1
    else:
        raise SpecError(f"unknown harmonic rule {harmonic_rule!r}")
    omega = harmonics.astype(float)
    wa = np.ones(x.size) if atom_frequencies is None else np.asarray(atom_frequencies, dtype=float)

    shape = np.sqrt(omega / omega[0])[None, :] * mode_profile(harmonics, x).T
    if anchor == "max_ratio":
        ref = np.max(np.abs(shape / omega[None, :]))
    else:
        j, kk = anchor
        ref = shape[j, kk] / omega[kk]
    if coupling_normalization == 0.0:
        g0 = 0.0
    elif ref == 0.0:
        raise SpecError("anchor coupling sits on a mode node; cannot normalize")
    else:
        g0 = coupling_normalization / ref

    return SystemSpec(
        atom_frequencies=wa,
        atom_positions=x,
        mode_frequencies=omega,
        mode_harmonics=harmonics,
        coupling=g0 * shape,
        generator={
            "kind": "pec_cavity",
            "atom_positions": x.tolist(),
            "mode_count": mode_count,
            "harmonic_rule": harmonic_rule,
            "coupling_normalization": coupling_normalization,
            "anchor": anchor if isinstance(anchor, str) else list(anchor),
            "atom_frequencies": wa.tolist(),
        },
    )


def build_random_spec(atom_count: int, mode_count: int, seed: int = 0, coupling_scale: float = 0.3) -> SystemSpec:
    """Random spec for property checks.

    Atom frequencies are drawn from [0.5, 1.5] (the first pinned to 1), mode
    frequencies are sorted draws from [0.5, 3] with a minimum spacing and the
    couplings are Gaussian with standard deviation ``coupling_scale``.
    """
    if atom_count < 1 or mode_count < 1:
        raise SpecError("need at least one atom and one mode")
    rng = np.random.default_rng(seed)
    wa = rng.uniform(0.5, 1.5, atom_count)
    wa[0] = 1.0
    wf = np.sort(rng.uniform(0.5, 3.0, mode_count)) + 1e-3 * np.arange(mode_count)
    g = coupling_scale * rng.standard_normal((atom_count, mode_count))
    return SystemSpec(
        atom_frequencies=wa,
        mode_frequencies=wf,
        coupling=g,
        generator={"kind": "random", "atom_count": atom_count, "mode_count": mode_count,
                   "seed": int(seed), "coupling_scale": coupling_scale},
    )


def spec_from_generator(gen: dict[str, Any]) -> SystemSpec:
    kind = gen.get("kind")
    if kind == "random":
        return build_random_spec(int(gen["atom_count"]), int(gen["mode_count"]), int(gen.get("seed", 0)),
                                 float(gen.get("coupling_scale", 0.3)))
    if kind == "periodic_lattice":
        return build_periodic_lattice_spec(int(gen["mode_count"]), float(gen.get("coupling_scale", 1.0)))
    if kind == "pec_cavity":
        anchor = gen.get("anchor", "max_ratio")
        if not isinstance(anchor, str):
            anchor = tuple(int(a) for a in anchor)
        return build_pec_cavity_spec(
            gen["atom_positions"],
            int(gen["mode_count"]),
            harmonic_rule=gen.get("harmonic_rule", "odd"),
            coupling_normalization=float(gen.get("coupling_normalization", 0.1)),
            anchor=anchor,
            atom_frequencies=gen.get("atom_frequencies"),
        )
    raise SpecError(f"unknown generator kind {kind!r}")


# -- coupling matrices ---------------------------------------------------

@dataclass
class DickeCouplingMatrix:
    """Star-form coupling matrix [[diag(w_a), g], [g^T, diag(w_f)]]."""

    data: np.ndarray
    atom_count: int

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def mode_count(self) -> int:
        return self.size - self.atom_count

    @property
    def coupling(self) -> np.ndarray:
        return self.data[: self.atom_count, self.atom_count:]

    @property
    def atom_frequencies(self) -> np.ndarray:
        return np.diag(self.data)[: self.atom_count].copy()

    @property
    def mode_frequencies(self) -> np.ndarray:
        return np.diag(self.data)[self.atom_count:].copy()


@dataclass
class BandCouplingMatrix:
    """Band-form coupling matrix with bandwidth equal to the atom count.

    The atom-boson block ``rho`` is lower triangular (atom j couples to chain
    bosons 1..j) and the boson block carries the chain frequencies ``xi`` on
    its diagonal and hoppings within ``atom_count`` of it.
    """

    data: np.ndarray
    atom_count: int

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def mode_count(self) -> int:
        return self.size - self.atom_count

    @property
    def atom_frequencies(self) -> np.ndarray:
        return np.diag(self.data)[: self.atom_count].copy()

    @property
    def rho(self) -> np.ndarray:
        return self.data[: self.atom_count, self.atom_count:]

    @property
    def boson_block(self) -> np.ndarray:
        return self.data[self.atom_count:, self.atom_count:]

    @property
    def xi(self) -> np.ndarray:
        return np.diag(self.boson_block).copy()

    def hopping(self, k: int, j: int) -> float:
        """t_{k,k+j} with 0-based chain index k; zero past the chain end."""
        m = self.mode_count
        if k + j >= m:
            return 0.0
        return float(self.boson_block[k, k + j])


@dataclass
class TransformRecord:
    """Accumulated orthogonal Q with M_B = Q M_D Q^T.

    ``steps`` keeps the Householder steps in application order for audit.
    """

    q: np.ndarray
    atom_count: int
    steps: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def u(self) -> np.ndarray:
        """Boson block U; chain operators are b_j = sum_k U_jk a_k."""
        return self.q[self.atom_count:, self.atom_count:]

    def orthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.q @ self.q.T - np.eye(self.q.shape[0]))))

    def atom_block_exact(self) -> bool:
        na = self.atom_count
        q = self.q
        return (
            np.array_equal(q[:na, :na], np.eye(na))
            and not np.any(q[:na, na:])
            and not np.any(q[na:, :na])
        )


def assemble_dicke_matrix(spec: SystemSpec) -> DickeCouplingMatrix:
    spec.validate()
    na, m = spec.atom_count, spec.mode_count
    data = np.zeros((na + m, na + m))
    data[np.arange(na), np.arange(na)] = spec.atom_frequencies
    data[na + np.arange(m), na + np.arange(m)] = spec.mode_frequencies
    data[:na, na:] = spec.coupling
    data[na:, :na] = spec.coupling.T
    return DickeCouplingMatrix(data=data, atom_count=na)


def write_matrix_csv(matrix, path: str | Path) -> None:
    """Full symmetric storage, row-major, 17 significant digits."""
    data = getattr(matrix, "data", matrix)
    data = np.asarray(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in data:
            writer.writerow([f"{v:.17g}" for v in row])


def read_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows)
