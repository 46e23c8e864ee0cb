"""kagomesim: dipole-coupled breathing-kagome atomic metasurface simulator."""

from .geometry import (
    DisorderRealization,
    ImpurityPlacement,
    Lattice,
    LatticeSpec,
    apply_disorder,
    build_flake,
    place_impurity,
)
from .bloch import BandPoint, BlochHamiltonian, band_structure, bloch_matrix
from .dynamics import (
    DynamicsTrace,
    InitialState,
    calibrated_scenario,
    emission_scenario,
    evolve,
)
from .greens import CoincidentAtomsError, Polarization, coupling, green_tensor
from .hamiltonian import (
    EffectiveHamiltonian,
    ImpuritySpec,
    assemble_array,
    assemble_with_impurity,
)
from .spectra import ClassifyConfig, ModeSet, classify_modes, diagonalize
from .tightbinding import TBModel, tb_spectrum, wilson_polarization

__version__ = "0.1.0"

__all__ = [
    "BandPoint",
    "BlochHamiltonian",
    "CoincidentAtomsError",
    "ClassifyConfig",
    "DisorderRealization",
    "DynamicsTrace",
    "EffectiveHamiltonian",
    "ImpurityPlacement",
    "ImpuritySpec",
    "InitialState",
    "Lattice",
    "LatticeSpec",
    "ModeSet",
    "Polarization",
    "TBModel",
    "apply_disorder",
    "assemble_array",
    "assemble_with_impurity",
    "band_structure",
    "bloch_matrix",
    "build_flake",
    "calibrated_scenario",
    "classify_modes",
    "coupling",
    "diagonalize",
    "emission_scenario",
    "evolve",
    "green_tensor",
    "place_impurity",
    "tb_spectrum",
    "wilson_polarization",
    "__version__",
]
