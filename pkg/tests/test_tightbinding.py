import numpy as np
import pytest

from kagomesim.geometry import LatticeSpec, build_flake
from kagomesim.greens import Polarization, coupling
from kagomesim.tightbinding import (
    TBModel,
    WilsonLoopError,
    fit_hoppings,
    tb_bloch_matrix,
    tb_flake_hamiltonian,
    tb_spectrum,
    wilson_polarization,
)

NONTRIVIAL = TBModel(t_intra=-0.2, t_inner=-1.0)
TRIVIAL = TBModel(t_intra=-1.0, t_inner=-0.2)


def test_flake_hamiltonian_structure():
    lat = build_flake(LatticeSpec(d=0.1, delta=0.4, cells_per_side=4))
    h = tb_flake_hamiltonian(NONTRIVIAL, lat)
    m = h.matrix
    assert np.abs(m - m.conj().T).max() == 0  # Hermitian, real hoppings
    # intra-cell bond count: 3 per cell; inter-cell bonds: 3 per downward triangle
    n_cells = lat.n_atoms // 3
    assert np.count_nonzero(np.abs(m - np.diag(np.diag(m))) == 0.2) == 2 * 3 * n_cells


def test_corner_mode_count_by_phase():
    lat = build_flake(LatticeSpec(d=0.1, delta=0.4, cells_per_side=6))
    modes = tb_spectrum(NONTRIVIAL, lat)
    corner = (modes.classes == "corner") & modes.in_gap
    assert int(np.sum(corner)) == 3
    # pinned at the on-site energy by the generalized chiral symmetry
    assert np.abs(modes.detunings[corner]).max() < 1e-3
    modes_triv = tb_spectrum(TRIVIAL, lat)
    assert int(np.sum((modes_triv.classes == "corner") & modes_triv.in_gap)) == 0


def test_corner_modes_single_sublattice_support():
    # rotate the near-degenerate corner triple onto the corner sites: each
    # projected mode must live on one sublattice almost entirely
    lat = build_flake(LatticeSpec(d=0.1, delta=0.4, cells_per_side=6))
    modes = tb_spectrum(NONTRIVIAL, lat)
    corner = np.where((modes.classes == "corner") & modes.in_gap)[0]
    span = modes.vectors[:, corner]  # (N, 3)
    for c, corner_site in enumerate(lat.corner_sites):
        e = np.zeros(lat.n_atoms)
        e[corner_site] = 1.0
        v = span @ (span.conj().T @ e)
        v /= np.linalg.norm(v)
        sub = lat.sublattice[corner_site]
        weight = np.sum(np.abs(v[lat.sublattice == sub]) ** 2)
        assert weight > 0.999


def test_equal_hoppings_gapless_at_k():
    m = TBModel(-1.0, -1.0)
    evals = np.linalg.eigvalsh(tb_bloch_matrix(m, None, np.array([1 / 3, 2 / 3])))
    assert evals[1] - evals[0] < 1e-12  # Dirac touching of the lower bands
    assert evals[2] == pytest.approx(2.0)  # flat band at -2t


def test_wilson_polarization_phases():
    p_nontrivial = wilson_polarization(NONTRIVIAL, grid=48)
    p_trivial = wilson_polarization(TRIVIAL, grid=48)
    assert np.abs(p_nontrivial - 1 / 3).max() < 0.01
    assert np.abs(p_trivial).max() < 0.01


def test_wilson_toggle_under_hopping_exchange():
    a = wilson_polarization(TBModel(-0.3, -0.9), grid=36)
    b = wilson_polarization(TBModel(-0.9, -0.3), grid=36)
    assert np.abs(a - 1 / 3).max() < 0.02
    assert np.abs(b).max() < 0.02


def test_wilson_refuses_gap_closing():
    with pytest.raises(WilsonLoopError):
        wilson_polarization(TBModel(-1.0, -1.0), grid=24)


def test_fit_hoppings_from_couplings():
    spec = LatticeSpec(d=0.1, delta=0.6, cells_per_side=6)
    pz = Polarization.out_of_plane()
    model = fit_hoppings(spec, pz)
    ex = np.array([1.0, 0.0, 0.0])
    assert model.t_intra == pytest.approx(
        coupling(spec.r_a * ex, np.zeros(3), pz, pz).real
    )
    assert model.t_inner == pytest.approx(
        coupling(spec.r_b * ex, np.zeros(3), pz, pz).real
    )
    # strong breathing puts the dominant hopping on the intercell bond
    assert abs(model.t_intra) < abs(model.t_inner)
