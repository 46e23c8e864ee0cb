"""Acceptance suite: one test per criterion, printed pass/fail lines.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
report.  Tolerances are fixed here, not tuned at runtime; desk-scale
parameter choices (flake sizes, calibrated resonance detunings) are the
package defaults and are recorded in run manifests.
"""

import functools
import json

import numpy as np
import pytest

from kagomesim.bloch import (
    LatticeSumTable,
    band_hessian,
    band_structure,
    convergence_report,
    special_points,
)
from kagomesim.cli import main as cli_main
from kagomesim.dynamics import calibrated_scenario
from kagomesim.geometry import LatticeSpec, build_flake
from kagomesim.greens import K0, Polarization, coupling, green_tensor
from kagomesim.hamiltonian import assemble_array
from kagomesim.spectra import (
    classify_modes,
    diagonalize,
    disorder_ensemble,
    sweep_theta,
)
from kagomesim.tightbinding import fit_hoppings, tb_spectrum, wilson_polarization


def criterion(num, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[acceptance] criterion {num} ({name}): FAIL")
                raise
            print(f"[acceptance] criterion {num} ({name}): PASS")

        return wrapper

    return decorate


@criterion(1, "Green's-tensor identity suite")
def test_criterion_1_greens_identities():
    rng = np.random.default_rng(1)
    # self-term limit within 1%
    for _ in range(4):
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        pol = Polarization(tuple(v))
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        g = green_tensor(1e-3 * n)
        val = (3 * np.pi / K0) * np.conj(pol.array) @ g @ pol.array
        assert abs(val.imag - 0.5) <= 0.005
    # transpose symmetry and reciprocity to 1e-12
    r = np.array([0.04, -0.02, 0.03])
    g = green_tensor(r)
    assert np.abs(g - g.T).max() < 1e-12
    for _ in range(4):
        p_i = Polarization(tuple(rng.normal(size=3) + 1j * rng.normal(size=3)))
        p_j = Polarization(tuple(rng.normal(size=3) + 1j * rng.normal(size=3)))
        a, b = rng.normal(size=3) * 0.2, rng.normal(size=3) * 0.2
        g_ij = coupling(a, b, p_i, p_j)
        g_ji = coupling(b, a, p_j.conjugate(), p_i.conjugate())
        assert abs(g_ij - g_ji) <= 1e-12 * max(1.0, abs(g_ij))
    # Dicke pair rates {2, 0} within 1% of 2 Gamma0
    pz = Polarization.out_of_plane()
    gg = coupling(np.array([1e-3, 0, 0]), np.zeros(3), pz, pz)
    rates = np.sort(-2 * np.linalg.eigvals(np.array([[-0.5j, gg], [gg, -0.5j]])).imag)
    assert abs(rates[1] - 2.0) <= 0.02
    assert abs(rates[0]) <= 0.02


@criterion(2, "collective-decay positivity")
def test_criterion_2_decay_positivity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        L = int(rng.integers(2, 9))
        delta = float(rng.uniform(-0.6, 0.6))
        v = rng.normal(size=3)
        pol = Polarization(tuple(v))  # random linear polarization
        lat = build_flake(LatticeSpec(d=0.1, delta=delta, cells_per_side=L))
        h = assemble_array(lat, pol)
        min_eig = np.linalg.eigvalsh(h.decay_matrix()).min()
        assert min_eig >= -1e-8, f"L={L} delta={delta:.3f} min_eig={min_eig:.2e}"


@pytest.fixture(scope="module")
def bloch_table():
    spec = LatticeSpec(d=0.1, delta=0.0, cells_per_side=10)
    return spec, LatticeSumTable(spec, Polarization.out_of_plane())


@criterion(3, "band-structure properties")
def test_criterion_3_bands(bloch_table):
    spec, table = bloch_table
    pol = Polarization.out_of_plane()
    pts = special_points(spec)
    # Gamma point: most subradiant band below 0.02 Gamma0
    gamma_point = band_structure(spec, pol, [pts["G"]], table=table)[0]
    assert gamma_point.gamma.min() < 0.02
    # subradiance outside the light cone: |k| > 1.2 k0
    ring = [
        1.25 * K0 * np.array([np.cos(a), np.sin(a)])
        for a in np.linspace(0.0, 2 * np.pi, 7)
    ]
    far = [pts["K"], pts["M"], 0.5 * (pts["K"] + pts["M"])]
    for p in band_structure(spec, pol, ring + far, table=table):
        assert np.all(p.gamma < 0.05), f"k={p.k} gamma={p.gamma}"
    # gamma >= -1e-3 (truncation error) holds where the sums are converged,
    # i.e. away from the smeared light-cone shoulder
    for p in band_structure(spec, pol, far, table=table):
        assert np.all(p.gamma > -1e-3)
    # saddle point at M in the upper band
    hess = band_hessian(table, pts["M"], band=2)
    eigs = np.linalg.eigvalsh(hess)
    assert eigs[0] < 0 < eigs[1]
    # self-convergence under radius doubling outside the light cone
    sample = np.array(
        [pts["K"], pts["M"], 0.5 * (pts["K"] + pts["M"]), pts["K"] / 3.0]
    )
    report = convergence_report(spec, pol, sample)
    assert report["max_shift_outside_light_cone"] < 1e-3, report


@pytest.fixture(scope="module")
def flake_10():
    return build_flake(LatticeSpec(d=0.1, delta=0.3, cells_per_side=10))


def in_gap_corner_detunings(lat, pol):
    modes = classify_modes(diagonalize(assemble_array(lat, pol)), lat)
    idx = np.where((modes.classes == "corner") & modes.in_gap)[0]
    return modes, idx


@criterion(4, "corner-state phenomenology")
def test_criterion_4_corner_states(flake_10):
    lat = flake_10
    # delta=0.3, pi polarization: exactly 3 in-gap corner modes, (2+1) split
    modes, idx = in_gap_corner_detunings(lat, Polarization.out_of_plane())
    assert len(idx) == 3
    det = np.sort(modes.detunings[idx])
    gaps = np.sort(np.diff(det))
    assert gaps[0] < 1e-6  # degenerate pair
    assert gaps[1] > 1e-3  # split singleton
    # theta = 4 pi / 9: three nondegenerate single-corner modes
    modes, idx = in_gap_corner_detunings(lat, Polarization.in_plane(4 * np.pi / 9))
    assert len(idx) == 3
    hosts = [int(np.argmax(modes.corner_weight[m])) for m in idx]
    assert sorted(hosts) == [0, 1, 2]
    for m in idx:  # single-corner, not double
        w = np.sort(modes.corner_weight[m])[::-1]
        assert w[0] > 0.5 and w[1] < 0.25
    det = np.sort(modes.detunings[idx])
    assert np.diff(det).min() > 1e-3
    # theta = pi/2: double-corner reorganization, splitting in [0.01, 0.1]
    modes, idx = in_gap_corner_detunings(lat, Polarization.in_plane(np.pi / 2))
    double = [
        m for m in idx if np.sort(modes.corner_weight[m])[::-1][1] > 0.25
    ]
    assert len(double) == 2
    splitting = abs(modes.detunings[double[0]] - modes.detunings[double[1]])
    assert 0.01 <= splitting <= 0.1
    # delta = -0.3: trivial phase, no in-gap corner modes
    trivial = build_flake(LatticeSpec(d=0.1, delta=-0.3, cells_per_side=10))
    _, idx = in_gap_corner_detunings(trivial, Polarization.out_of_plane())
    assert len(idx) == 0


@criterion(5, "chasing diagram")
def test_criterion_5_chasing(flake_10):
    thetas = np.linspace(0.0, np.pi, 181)
    track = sweep_theta(flake_10, thetas)
    # pi periodicity
    assert np.abs(track.frequencies[0] - track.frequencies[-1]).max() < 1e-6
    # the three curves are mutually shifted copies, shift pi/3 within 2 deg
    f = track.frequencies[:-1]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        devs = [np.abs(f[:, i] - np.roll(f[:, j], s)).mean() for s in range(180)]
        best = int(np.argmin(devs))
        assert min(abs(best - 60), abs(best - 120)) <= 2, f"shift {best} deg"
    # reorganization angles at the corner bisectors, within 2 degrees
    angles = np.degrees(track.reorganization_angles()) % 180.0
    targets = np.array([30.0, 90.0, 150.0])
    assert len(angles) > 0
    for a in angles:
        assert np.min(np.abs(targets - a)) <= 2.0, f"angle {a:.2f}"
    for t in targets:
        assert np.min(np.abs(angles - t)) <= 2.0, f"target {t} not found"


@criterion(6, "disorder robustness ordering")
def test_criterion_6_disorder():
    spec = LatticeSpec(d=0.1, delta=0.6, cells_per_side=10)
    kappas = np.array([0.015, 0.03, 0.045, 0.06, 0.075, 0.09, 0.105, 0.12])
    stars = {}
    for name, pol in (
        ("C3v", Polarization.out_of_plane()),
        ("C2v", Polarization.in_plane(np.pi / 6)),
        ("Cs", Polarization.in_plane(np.pi / 4)),
    ):
        result = disorder_ensemble(
            spec, pol, kappas, n_realizations=30, seed=2024
        )
        stars[name] = result["kappa_star"]
        assert stars[name] is not None, f"{name}: no crossing found"
    assert stars["C3v"] > stars["C2v"] > stars["Cs"], stars
    assert 0.05 <= stars["C3v"] <= 0.15, stars


def mirror_sectors(w):
    # reflection x -> -x maps the sector centers 0..300 deg as 0<->180,
    # 60<->120, 240<->300
    return np.array([w[3], w[2], w[1], w[0], w[5], w[4]])


@criterion(7, "emission scenarios")
def test_criterion_7_emission():
    traces = {}
    for name in ("fig5a", "fig5b", "fig5c", "fig5d", "fig5e", "fig5f",
                 "fig3g", "fig3h", "fig3i"):
        traces[name] = calibrated_scenario(name)
    # fig5a: cross emission along the two non-x side directions, mirror pair
    w = traces["fig5a"][0].directional_weights[-1]
    lines = np.array([w[1] + w[4], w[2] + w[5], w[0] + w[3]])
    assert lines[0] > lines[2] and lines[1] > lines[2]
    assert abs(lines[0] - lines[1]) <= 0.05 * (lines[0] + lines[1])
    # fig5b: +-x sectors hold the majority
    w = traces["fig5b"][0].directional_weights[-1]
    assert w[0] + w[3] > 0.5
    # fig5c/d: mirror conjugacy within 5% per sector; threefold structure
    wc = traces["fig5c"][0].directional_weights[-1]
    wd = traces["fig5d"][0].directional_weights[-1]
    assert np.abs(wc - mirror_sectors(wd)).max() <= 0.05
    for w in (wc, wd):
        assert np.abs(w - np.roll(w, -2)).max() <= 0.05  # 120-degree rotation
    # opposite handedness of the two spirals
    cc = traces["fig5c"][0].chirality[-1]
    cd = traces["fig5d"][0].chirality[-1]
    assert cc * cd < 0
    # fig5f chirality at least 3x fig5e (floor 0.01 on the reference)
    ce = abs(traces["fig5e"][0].chirality[-1])
    cf = abs(traces["fig5f"][0].chirality[-1])
    assert cf >= 3.0 * max(ce, 0.01)
    # fig3g: bidirectional edge populations equal within 5%
    for name, check in (("fig3g", "sym"), ("fig3h", 1), ("fig3i", 2)):
        trace, lat, _ = traces[name]
        pop = trace.populations[-1, : trace.n_array]
        left = pop[lat.edge_sets[1]].sum()
        right = pop[lat.edge_sets[2]].sum()
        if check == "sym":
            assert abs(left - right) / (left + right) <= 0.05
        elif check == 1:
            assert left / (left + right) > 0.70
        else:
            assert right / (left + right) > 0.70


@criterion(8, "tight-binding oracle equivalence")
def test_criterion_8_oracle():
    spec = LatticeSpec(d=0.1, delta=0.6, cells_per_side=6)
    lat = build_flake(spec)
    pz = Polarization.out_of_plane()
    # full Green's-function model
    modes = classify_modes(diagonalize(assemble_array(lat, pz)), lat)
    n_full = int(np.sum((modes.classes == "corner") & modes.in_gap))
    # nearest-neighbor model with hoppings fitted to the couplings
    model = fit_hoppings(spec, pz)
    tb_modes = tb_spectrum(model, lat)
    n_tb = int(np.sum((tb_modes.classes == "corner") & tb_modes.in_gap))
    assert n_full == n_tb == 3
    # Wilson-loop polarization across the breathing transition.  The fitted
    # near-field hoppings are positive, which inverts the band order: the
    # isolated band sits on top (the lowest pair touches at Gamma), so the
    # quantized polarization is read off band 2.
    p_topo = wilson_polarization(model, grid=120, band=2)
    assert np.abs(p_topo - 1.0 / 3.0).max() < 5e-3
    swapped = type(model)(t_intra=model.t_inner, t_inner=model.t_intra)
    p_triv = wilson_polarization(swapped, grid=120, band=2)
    assert np.abs(p_triv).max() < 5e-3


@criterion(9, "reproduce determinism")
def test_criterion_9_determinism(tmp_path):
    config = {
        "lattice": {"cells_per_side": 8, "delta": 0.3},
        "sweep": {"theta_points": 25},
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        rc = cli_main(
            ["reproduce", "fig2", "--config", str(cfg), "--out", str(out),
             "--seed", "11", "--quiet"]
        )
        assert rc == 0
    csvs = sorted(p.name for p in out_a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
