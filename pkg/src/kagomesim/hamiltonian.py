"""Assembly of the dense non-Hermitian single-excitation Hamiltonian.

Matrices are expressed as detunings from the array transition frequency in
units of hbar*Gamma0, so the bare-array diagonal is -i/2.  The array block is
all-to-all: every off-diagonal entry carries the full Green's-function
coupling, with no distance cutoff.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ImpurityPlacement, Lattice
from .greens import (
    DEFAULT_MIN_SEPARATION,
    K0,
    CoincidentAtomsError,
    Polarization,
    coupling_batch,
)

IMPURITY_TWO_LEVEL = "two_level"
IMPURITY_V_TYPE = "v_type"

#: Markovian-bath guard: warn if the impurity linewidth exceeds this fraction
#: of Gamma0 (the array must evolve much faster than the impurity).
MARKOV_LINEWIDTH_GUARD = 0.1


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """Dense complex M x M matrix plus basis bookkeeping.

    The first ``n_array`` basis states are array atoms (label "atom:<i>");
    impurity levels follow ("imp:e" for a two-level impurity, "imp:sigma+"
    and "imp:sigma-" for the V type).
    """

    matrix: np.ndarray
    basis_labels: tuple[str, ...]
    n_array: int
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def array_block(self) -> np.ndarray:
        return self.matrix[: self.n_array, : self.n_array]

    def impurity_indices(self) -> list[int]:
        return list(range(self.n_array, self.size))

    def decay_matrix(self) -> np.ndarray:
        """Collective decay matrix Gamma = -2 Im(H), units of Gamma0."""
        return -2.0 * self.matrix.imag


@dataclass(frozen=True, eq=False)
class ImpuritySpec:
    """Impurity atom parameters, all rates in units of Gamma0.

    For ``kind="two_level"`` the transition polarization must be given; the
    V type uses the fixed sigma+/sigma- pair and splits the two excited
    levels by +/- ``zeeman`` (the Zeeman energy mu*B in units of
    hbar*Gamma0).
    """

    detuning: float  # omega_A - omega_0, units of Gamma0
    linewidth: float = 0.002  # Gamma_A / Gamma0
    kind: str = IMPURITY_TWO_LEVEL
    polarization: Polarization | None = None
    zeeman: float = 0.0
    placement: ImpurityPlacement | None = None

    def __post_init__(self):
        if self.linewidth <= 0:
            raise ValueError(f"impurity linewidth must be positive, got {self.linewidth}")
        if self.kind not in (IMPURITY_TWO_LEVEL, IMPURITY_V_TYPE):
            raise ValueError(f"unknown impurity kind {self.kind!r}")
        if self.kind == IMPURITY_TWO_LEVEL and self.polarization is None:
            raise ValueError("two-level impurity needs a transition polarization")
        if self.linewidth > MARKOV_LINEWIDTH_GUARD:
            warnings.warn(
                f"impurity linewidth {self.linewidth} Gamma0 exceeds the Markovian "
                f"guard {MARKOV_LINEWIDTH_GUARD}; the array no longer acts as a "
                "fast bath",
                stacklevel=2,
            )


def _pairwise_couplings(
    positions: np.ndarray,
    pol: Polarization,
    k0: float,
    min_separation: float,
) -> np.ndarray:
    """(N, N) matrix of couplings for a common polarization; diagonal zero."""
    n = positions.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    sep = positions[iu] - positions[ju]
    dist = np.linalg.norm(sep, axis=1)
    if dist.size and dist.min() < min_separation:
        raise CoincidentAtomsError(
            f"minimum atom separation {dist.min():.3e} below guard "
            f"{min_separation:.3e} (units of lambda0)"
        )
    g = coupling_batch(sep, pol, pol, k0=k0)
    out = np.zeros((n, n), dtype=complex)
    out[iu, ju] = g
    out[ju, iu] = g  # common polarization: complex symmetric
    return out


def assemble_array(
    lat: Lattice,
    pol: Polarization,
    k0: float = K0,
    min_separation: float = DEFAULT_MIN_SEPARATION,
) -> EffectiveHamiltonian:
    """Bare-array Hamiltonian for atoms sharing a common polarization."""
    h = _pairwise_couplings(lat.positions, pol, k0, min_separation)
    np.fill_diagonal(h, -0.5j)
    labels = tuple(f"atom:{i}" for i in range(lat.n_atoms))
    params = {
        "delta": lat.spec.delta,
        "d": lat.spec.d,
        "cells_per_side": lat.spec.cells_per_side,
        "polarization": [repr(c) for c in pol.components],
    }
    return EffectiveHamiltonian(matrix=h, basis_labels=labels, n_array=lat.n_atoms, params=params)


def assemble_with_impurity(
    lat: Lattice,
    pol: Polarization,
    imp: ImpuritySpec,
    k0: float = K0,
    min_separation: float = DEFAULT_MIN_SEPARATION,
) -> EffectiveHamiltonian:
    """Array plus impurity Hamiltonian.

    The impurity-array cross couplings carry the sqrt(Gamma_A/Gamma0)
    prefactor relative to the array-array couplings.  For the V type the two
    excited levels couple each with their own circular polarization and there
    is no direct sigma+/sigma- matrix element: the two transitions share a
    position, and the regularized same-point coupling vanishes because the
    circular polarizations are orthogonal.
    """
    if imp.placement is None:
        raise ValueError("impurity spec has no placement")
    n = lat.n_atoms
    h_arr = assemble_array(lat, pol, k0=k0, min_separation=min_separation)
    pos_imp = imp.placement.position
    sep_to_atoms = lat.positions - pos_imp[np.newaxis, :]
    if np.linalg.norm(sep_to_atoms, axis=1).min() < min_separation:
        raise CoincidentAtomsError("impurity coincides with an array atom")
    scale = np.sqrt(imp.linewidth)

    if imp.kind == IMPURITY_TWO_LEVEL:
        levels = [("imp:e", imp.polarization, imp.detuning)]
    else:
        levels = [
            ("imp:sigma+", Polarization.sigma_plus(), imp.detuning + imp.zeeman),
            ("imp:sigma-", Polarization.sigma_minus(), imp.detuning - imp.zeeman),
        ]

    m = n + len(levels)
    h = np.zeros((m, m), dtype=complex)
    h[:n, :n] = h_arr.matrix
    for off, (label, pol_a, det) in enumerate(levels):
        idx = n + off
        # impurity row: p_A^* . G(r_A - r_m) . p_m ; column is the swapped form
        h[idx, :n] = scale * coupling_batch(-sep_to_atoms, pol_a, pol, k0=k0)
        h[:n, idx] = scale * coupling_batch(sep_to_atoms, pol, pol_a, k0=k0)
        h[idx, idx] = det - 0.5j * imp.linewidth
    labels = h_arr.basis_labels + tuple(lbl for lbl, _, _ in levels)
    params = dict(h_arr.params)
    params.update(
        {
            "impurity_kind": imp.kind,
            "impurity_detuning": imp.detuning,
            "impurity_linewidth": imp.linewidth,
            "impurity_zeeman": imp.zeeman,
            "impurity_anchor": imp.placement.anchor,
            "impurity_height_d": imp.placement.height_d,
        }
    )
    return EffectiveHamiltonian(matrix=h, basis_labels=labels, n_array=n, params=params)


def dump_matrix(h: EffectiveHamiltonian, path: str | Path) -> None:
    """Write the matrix as raw little-endian complex doubles plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(h.matrix, dtype="<c16").tobytes())
    sidecar = {
        "dimension": h.size,
        "dtype": "complex128-little-endian-row-major",
        "basis_labels": list(h.basis_labels),
        "n_array": h.n_array,
        "params": h.params,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
