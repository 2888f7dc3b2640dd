"""Band-reduced Dicke Hamiltonians: Householder chain mapping, exact and TEBD evolution."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    BandCouplingMatrix,
    DickeCouplingMatrix,
    SpecError,
    SystemSpec,
    TransformRecord,
    assemble_dicke_matrix,
    build_pec_cavity_spec,
    build_periodic_lattice_spec,
    build_random_spec,
)
from .transform import band_reduce, lanczos_chain_map_oracle, validate_band_structure  # noqa: E402

__all__ = [
    "BandCouplingMatrix",
    "DickeCouplingMatrix",
    "SpecError",
    "SystemSpec",
    "TransformRecord",
    "assemble_dicke_matrix",
    "band_reduce",
    "build_pec_cavity_spec",
    "build_periodic_lattice_spec",
    "build_random_spec",
    "lanczos_chain_map_oracle",
    "validate_band_structure",
]
