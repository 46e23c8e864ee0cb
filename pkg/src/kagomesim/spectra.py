"""Finite-array eigenmodes: diagonalization, localization, sweeps.

Eigenvalues are reported as lambda = detuning - i*decay/2 in units of Gamma0
(so the per-mode decay rate is -2*Im(lambda)).  Modes are classified by where
their population sits: in disks around the corner sites, on strips along the
flake boundary, on the impurity, or in the bulk; disk radii and strip widths
are ClassifyConfig knobs expressed in units of the intercell spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .geometry import Lattice, LatticeSpec, apply_disorder, build_flake
from .greens import CoincidentAtomsError, Polarization
from .hamiltonian import EffectiveHamiltonian, assemble_array
from .util import parallel_map

CLASS_CORNER = "corner"
CLASS_EDGE = "edge"
CLASS_BULK = "bulk"
CLASS_IMPURITY = "impurity-dominated"

EDGE_FAMILY_FULL = "F"
EDGE_FAMILY_DOUBLE = ("T_12", "T_13", "T_23")
EDGE_FAMILY_SINGLE = ("E_1", "E_2", "E_3")


@dataclass(frozen=True)
class ClassifyConfig:
    """Thresholds for the spatial mode classification.

    These are artifact choices (population fractions and strip widths), kept
    configurable so figure matching can be tuned without touching code.
    """

    corner_radius_d: float = 0.5  # corner disk radius in units of d
    corner_threshold: float = 0.5
    edge_width_d: float = 0.5  # boundary strip width in units of d
    edge_threshold: float = 0.6
    impurity_threshold: float = 0.5
    single_edge_fraction: float = 0.7  # of total edge-strip population
    double_corner_fraction: float = 0.25  # secondary corner share for P modes
    gap_min_side_fraction: float = 0.05  # bulk modes required on each side of the gap


@dataclass(eq=False)
class ModeSet:
    """Right eigenmodes of one effective Hamiltonian, sorted by Re(lambda)."""

    eigenvalues: np.ndarray  # (M,) complex
    vectors: np.ndarray  # (M, M), columns unit-norm
    ipr: np.ndarray  # (M,)
    n_array: int
    classes: np.ndarray | None = None  # (M,) str
    sublattice_weight: np.ndarray | None = None  # (M, 3)
    corner_weight: np.ndarray | None = None  # (M, 3)
    edge_weight: np.ndarray | None = None  # (M, 3)
    in_gap: np.ndarray | None = None  # (M,) bool
    gap_window: tuple[float, float] | None = None

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def detunings(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def decay_rates(self) -> np.ndarray:
        return -2.0 * self.eigenvalues.imag


def diagonalize(h: EffectiveHamiltonian) -> ModeSet:
    """Full right eigendecomposition of a dense effective Hamiltonian."""
    try:
        evals, evecs = scipy.linalg.eig(h.matrix)
    except Exception as exc:  # pragma: no cover - LAPACK failures are exotic
        cond = np.linalg.cond(h.matrix)
        raise RuntimeError(
            f"eigensolver failed on {h.size}x{h.size} matrix (cond={cond:.3e})"
        ) from exc
    order = np.argsort(evals.real, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    evecs = evecs / np.linalg.norm(evecs, axis=0, keepdims=True)
    pop = np.abs(evecs) ** 2
    ipr = (pop**2).sum(axis=0)
    return ModeSet(eigenvalues=evals, vectors=evecs, ipr=ipr, n_array=h.n_array)


def _edge_lines(lat: Lattice) -> list[tuple[np.ndarray, np.ndarray]]:
    """The three boundary lines as (point, inward unit normal)."""
    p_a = lat.positions[lat.corner_sites[0], :2]
    p_b = lat.positions[lat.corner_sites[1], :2]
    p_c = lat.positions[lat.corner_sites[2], :2]
    lines = []
    for p, q, other in ((p_a, p_b, p_c), (p_a, p_c, p_b), (p_b, p_c, p_a)):
        t = (q - p) / np.linalg.norm(q - p)
        normal = np.array([-t[1], t[0]])
        if np.dot(other - p, normal) < 0:
            normal = -normal
        lines.append((p, normal))
    return lines


def classify_modes(
    modes: ModeSet,
    lat: Lattice,
    gap_window: tuple[float, float] | None = None,
    config: ClassifyConfig = ClassifyConfig(),
) -> ModeSet:
    """Populate spatial classifications, weights, and the in-gap flags."""
    pop = np.abs(modes.vectors) ** 2  # (M, M): row = basis index, col = mode
    arr_pop = pop[: modes.n_array, :]
    d = lat.spec.d

    corner_pos = lat.positions[lat.corner_sites, :2]
    dist_to_corner = np.linalg.norm(
        lat.positions[:, None, :2] - corner_pos[None, :, :], axis=2
    )  # (N, 3)
    corner_disk = dist_to_corner <= config.corner_radius_d * d
    corner_weight = np.stack(
        [arr_pop[corner_disk[:, c], :].sum(axis=0) for c in range(3)], axis=1
    )  # (M, 3)

    lines = _edge_lines(lat)
    line_dist = np.stack(
        [np.abs((lat.positions[:, :2] - p) @ n) for p, n in lines], axis=1
    )  # (N, 3)
    edge_strip = line_dist <= config.edge_width_d * d
    edge_weight = np.stack(
        [arr_pop[edge_strip[:, e], :].sum(axis=0) for e in range(3)], axis=1
    )

    sub_weight = np.stack(
        [arr_pop[lat.sublattice == s, :].sum(axis=0) for s in ("A", "B", "C")],
        axis=1,
    )

    imp_pop = pop[modes.n_array :, :].sum(axis=0)
    strip_pop = arr_pop[edge_strip.any(axis=1), :].sum(axis=0)

    classes = np.full(modes.size, CLASS_BULK, dtype=object)
    classes[strip_pop > config.edge_threshold] = CLASS_EDGE
    classes[corner_weight.sum(axis=1) > config.corner_threshold] = CLASS_CORNER
    classes[imp_pop > config.impurity_threshold] = CLASS_IMPURITY
    classes = classes.astype(str)

    if gap_window is None:
        gap_window = find_gap_window(
            modes.detunings[classes == CLASS_BULK], config=config
        )
    if gap_window is None:
        in_gap = np.zeros(modes.size, dtype=bool)
    else:
        lo, hi = gap_window
        in_gap = (modes.detunings > lo) & (modes.detunings < hi)

    return replace(
        modes,
        classes=classes,
        sublattice_weight=sub_weight,
        corner_weight=corner_weight,
        edge_weight=edge_weight,
        in_gap=in_gap,
        gap_window=gap_window,
    )


def find_gap_window(
    bulk_detunings: np.ndarray,
    config: ClassifyConfig = ClassifyConfig(),
) -> tuple[float, float] | None:
    """Largest spectral gap of the bulk modes below the upper band.

    Only gaps with at least ``gap_min_side_fraction`` of the bulk modes on
    each side qualify, which keeps sparse spectral tails from masquerading as
    the band gap.
    """
    det = np.sort(np.asarray(bulk_detunings, dtype=float))
    n = det.size
    if n < 4:
        return None
    k_min = max(1, int(np.ceil(config.gap_min_side_fraction * n)))
    gaps = det[1:] - det[:-1]
    lo_i, hi_i = k_min - 1, n - 1 - k_min
    if hi_i <= lo_i:
        return None
    idx = lo_i + int(np.argmax(gaps[lo_i : hi_i + 1]))
    return (float(det[idx]), float(det[idx + 1]))


def edge_family(
    mode_edge_weight: np.ndarray, config: ClassifyConfig = ClassifyConfig()
) -> str:
    """Name the edge-weight pattern: full (F), double (T_ij), single (E_i)."""
    w = np.asarray(mode_edge_weight, dtype=float)
    total = w.sum()
    if total <= 0:
        return ""
    share = w / total
    order = np.argsort(share)[::-1]
    if share[order[0]] > config.single_edge_fraction:
        return EDGE_FAMILY_SINGLE[order[0]]
    if share[order[0]] + share[order[1]] > config.single_edge_fraction:
        pair = tuple(sorted((order[0], order[1])))
        return dict(zip(((0, 1), (0, 2), (1, 2)), EDGE_FAMILY_DOUBLE))[pair]
    return EDGE_FAMILY_FULL


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(eq=False)
class CornerModeTrack:
    """Corner-mode frequencies tracked against the polarization angle."""

    thetas: np.ndarray  # (T,)
    frequencies: np.ndarray  # (T, 3) detunings of the modes tracked per corner
    decay_rates: np.ndarray  # (T, 3)
    corner_weights: np.ndarray  # (T, 3, 3): [theta, tracked corner, corner]
    corner_dominated: np.ndarray  # (T, 3) bool; False flags a BIC-regime gap
    double_corner: np.ndarray  # (T, 3) bool
    in_gap: np.ndarray  # (T, 3) bool
    ordering: list[str]  # (T,) e.g. "ACB": freq order, largest first

    def reorganization_angles(self) -> np.ndarray:
        """Angles where tracked modes hybridize into in-gap double-corner pairs.

        Exact crossings inside the bulk bands (the BIC regions, where the
        localized states are degenerate with extended modes) do not count:
        only in-gap double-corner modes mark a reorganization.
        """
        flagged = self.thetas[(self.double_corner & self.in_gap).any(axis=1)]
        if flagged.size == 0:
            return np.array([])
        if self.thetas.size > 1:
            step = np.median(np.diff(np.sort(self.thetas)))
        else:
            step = 0.0
        clusters = [[flagged[0]]]
        for th in flagged[1:]:
            if th - clusters[-1][-1] <= 1.5 * step:
                clusters[-1].append(th)
            else:
                clusters.append([th])
        return np.array([float(np.mean(c)) for c in clusters])


def _theta_job(args):
    lat, theta, config = args
    h = assemble_array(lat, Polarization.in_plane(theta))
    modes = classify_modes(diagonalize(h), lat, config=config)
    return _track_corners(modes, config)


def _track_corners(modes: ModeSet, config: ClassifyConfig):
    """Per corner, pick the mode with maximal population near that corner."""
    freqs = np.zeros(3)
    decays = np.zeros(3)
    weights = np.zeros((3, 3))
    dominated = np.zeros(3, dtype=bool)
    double = np.zeros(3, dtype=bool)
    in_gap = np.zeros(3, dtype=bool)
    for c in range(3):
        m = int(np.argmax(modes.corner_weight[:, c]))
        w = modes.corner_weight[m]
        freqs[c] = modes.detunings[m]
        decays[c] = modes.decay_rates[m]
        weights[c] = w
        dominated[c] = w.sum() > config.corner_threshold
        others = np.delete(w, c)
        double[c] = dominated[c] and others.max() > config.double_corner_fraction
        in_gap[c] = bool(modes.in_gap[m])
    order = "".join("ABC"[i] for i in np.argsort(freqs)[::-1])
    return freqs, decays, weights, dominated, double, in_gap, order


def sweep_theta(
    lat: Lattice,
    thetas: np.ndarray,
    config: ClassifyConfig = ClassifyConfig(),
    workers: int = 1,
) -> CornerModeTrack:
    """Track the three corner modes over a grid of in-plane polarization angles."""
    thetas = np.asarray(thetas, dtype=float)
    results = parallel_map(
        _theta_job, [(lat, th, config) for th in thetas], workers=workers
    )
    freqs = np.array([r[0] for r in results])
    decays = np.array([r[1] for r in results])
    weights = np.array([r[2] for r in results])
    dominated = np.array([r[3] for r in results])
    double = np.array([r[4] for r in results])
    in_gap = np.array([r[5] for r in results])
    ordering = [r[6] for r in results]
    return CornerModeTrack(
        thetas=thetas,
        frequencies=freqs,
        decay_rates=decays,
        corner_weights=weights,
        corner_dominated=dominated,
        double_corner=double,
        in_gap=in_gap,
        ordering=ordering,
    )


def _delta_job(args):
    spec, delta, pol, config = args
    lat = build_flake(replace_spec_delta(spec, delta))
    h = assemble_array(lat, pol)
    modes = classify_modes(diagonalize(h), lat, config=config)
    return modes_to_rows(modes, job_key=f"delta={delta:.6g}", config=config)


def replace_spec_delta(spec: LatticeSpec, delta: float) -> LatticeSpec:
    return LatticeSpec(
        d=spec.d, delta=delta, cells_per_side=spec.cells_per_side, lambda0=spec.lambda0
    )


def sweep_delta(
    spec: LatticeSpec,
    deltas: np.ndarray,
    pol: Polarization,
    config: ClassifyConfig = ClassifyConfig(),
    workers: int = 1,
) -> list[dict]:
    """Spectra (with classifications) for each spacing imbalance in ``deltas``."""
    jobs = [(spec, float(dl), pol, config) for dl in deltas]
    nested = parallel_map(_delta_job, jobs, workers=workers)
    return [row for rows in nested for row in rows]


def _disorder_job(args):
    spec, pol, kappa, realization, seed, config = args
    lat = build_flake(spec)
    lat = apply_disorder(lat, kappa, seed)
    record = {
        "kappa": kappa,
        "realization": realization,
        "seed": seed,
        "skipped": False,
        "n_corner_in_gap": 0,
        "survived": False,
    }
    try:
        h = assemble_array(lat, pol)
    except CoincidentAtomsError:
        record["skipped"] = True
        return record
    modes = classify_modes(diagonalize(h), lat, config=config)
    n_corner = int(
        np.sum((modes.classes == CLASS_CORNER) & modes.in_gap)
    )
    record["n_corner_in_gap"] = n_corner
    record["survived"] = n_corner >= 3
    return record


def disorder_ensemble(
    spec: LatticeSpec,
    pol: Polarization,
    kappas: np.ndarray,
    n_realizations: int,
    seed: int = 0,
    config: ClassifyConfig = ClassifyConfig(),
    workers: int = 1,
) -> dict:
    """Corner-mode survival statistics over a positional-disorder ensemble.

    A realization survives when at least three in-gap corner-classified modes
    remain.  Realizations whose disordered geometry trips the
    minimum-separation guard are skipped and counted as non-survivals.
    Returns per-realization records, per-kappa survival fractions, and the
    critical strength kappa_star where survival first drops below 1/2
    (linearly interpolated between grid points).
    """
    if n_realizations < 1:
        raise ValueError(f"n_realizations must be >= 1, got {n_realizations}")
    jobs = []
    for k_idx, kappa in enumerate(kappas):
        for r in range(n_realizations):
            # fold the kappa index into the seed so every realization is distinct
            job_seed = int(seed + 100_000 * k_idx + r)
            jobs.append((spec, pol, float(kappa), r, job_seed, config))
    records = parallel_map(_disorder_job, jobs, workers=workers)
    fractions = []
    for kappa in kappas:
        sub = [r for r in records if r["kappa"] == float(kappa)]
        fractions.append(float(np.mean([r["survived"] for r in sub])))
    kappa_star = critical_kappa(np.asarray(kappas, dtype=float), np.asarray(fractions))
    return {
        "records": records,
        "kappas": [float(k) for k in kappas],
        "survival_fraction": fractions,
        "kappa_star": kappa_star,
    }


def critical_kappa(kappas: np.ndarray, fractions: np.ndarray) -> float | None:
    """First crossing of survival fraction below 1/2, linearly interpolated."""
    for i in range(len(kappas)):
        if fractions[i] < 0.5:
            if i == 0:
                return float(kappas[0])
            k0, k1 = kappas[i - 1], kappas[i]
            f0, f1 = fractions[i - 1], fractions[i]
            if f0 == f1:
                return float(k1)
            return float(k0 + (f0 - 0.5) * (k1 - k0) / (f0 - f1))
    return None


def modes_to_rows(
    modes: ModeSet, job_key: str, config: ClassifyConfig = ClassifyConfig()
) -> list[dict]:
    """Flatten a classified ModeSet to CSV-ready row dicts."""
    if modes.classes is None:
        raise ValueError("modes must be classified first")
    rows = []
    for m in range(modes.size):
        rows.append(
            {
                "job_key": job_key,
                "mode_index": m,
                "re_omega": float(modes.detunings[m]),
                "gamma": float(modes.decay_rates[m]),
                "ipr": float(modes.ipr[m]),
                "class": str(modes.classes[m]),
                "in_gap": bool(modes.in_gap[m]),
                "w_A": float(modes.sublattice_weight[m, 0]),
                "w_B": float(modes.sublattice_weight[m, 1]),
                "w_C": float(modes.sublattice_weight[m, 2]),
                "corner_A": float(modes.corner_weight[m, 0]),
                "corner_B": float(modes.corner_weight[m, 1]),
                "corner_C": float(modes.corner_weight[m, 2]),
                "edge_1": float(modes.edge_weight[m, 0]),
                "edge_2": float(modes.edge_weight[m, 1]),
                "edge_3": float(modes.edge_weight[m, 2]),
                "edge_family": (
                    edge_family(modes.edge_weight[m], config)
                    if modes.classes[m] == CLASS_EDGE
                    else ""
                ),
            }
        )
    return rows
