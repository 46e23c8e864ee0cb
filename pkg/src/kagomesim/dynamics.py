"""Single-excitation dynamics and directional emission analysis.

States evolve under the non-Hermitian effective Hamiltonian as
psi(t) = exp(-i H t) psi0 with H in units of Gamma0 and t in units of
1/Gamma0, computed through one full eigendecomposition (many snapshot times
for the price of one solve).  If the eigenbasis is too ill-conditioned the
propagation falls back to dense scaling-and-squaring matrix exponentials.

Emission patterns are quantified in two ways:

* six 60-degree angular sectors about the impurity anchor, centered on the
  lattice axis directions (0, 60, ..., 300 degrees); the quasi-isotropic
  near-field cloud around the anchor is excluded and the weights are
  normalized per snapshot over the binned population;
* a chirality scalar: the population pattern is reduced to its third angular
  harmonic in radial bins around the anchor, and the mean phase advance of
  that harmonic from bin to bin measures how strongly (and with which
  handedness) the pattern spirals.  Mirror-symmetric patterns score zero.
  The angular sector weights alone cannot see handedness, which is why the
  chirality diagnostic is radius-resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import (
    ANCHOR_ADJACENT_CELL,
    ANCHOR_CENTRAL_HEXAGON,
    ANCHOR_TOP_CORNER_SITE,
    ImpurityPlacement,
    Lattice,
    LatticeSpec,
    build_flake,
    place_impurity,
)
from .greens import Polarization
from .hamiltonian import (
    IMPURITY_TWO_LEVEL,
    IMPURITY_V_TYPE,
    EffectiveHamiltonian,
    ImpuritySpec,
    assemble_with_impurity,
)

EIGENBASIS_CONDITION_LIMIT = 1e12
N_SECTORS = 6


@dataclass(frozen=True, eq=False)
class InitialState:
    """Unit-norm amplitude vector over the Hamiltonian basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        norm = np.linalg.norm(amp)
        if norm < 1e-300:
            raise ValueError("initial state must be nonzero")
        object.__setattr__(self, "amplitudes", amp / norm)

    @classmethod
    def impurity_excited(cls, h: EffectiveHamiltonian) -> "InitialState":
        """All amplitude on the (single) impurity excited level."""
        idx = h.impurity_indices()
        if len(idx) != 1:
            raise ValueError(
                f"impurity_excited needs exactly one impurity level, found {len(idx)}"
            )
        amp = np.zeros(h.size, dtype=complex)
        amp[idx[0]] = 1.0
        return cls(amp)

    @classmethod
    def v_type_symmetric(cls, h: EffectiveHamiltonian) -> "InitialState":
        """Equal superposition (|sigma+> + |sigma->)/sqrt(2)."""
        idx = h.impurity_indices()
        if len(idx) != 2:
            raise ValueError(
                f"v_type_symmetric needs two impurity levels, found {len(idx)}"
            )
        amp = np.zeros(h.size, dtype=complex)
        amp[idx] = 1.0 / np.sqrt(2.0)
        return cls(amp)


@dataclass(eq=False)
class DynamicsTrace:
    """Time-stamped populations and (optionally) directional diagnostics."""

    times: np.ndarray  # (T,), units of 1/Gamma0
    amplitudes: np.ndarray  # (T, M) complex
    populations: np.ndarray  # (T, M)
    total_norm: np.ndarray  # (T,)
    basis_labels: tuple[str, ...]
    n_array: int
    method: str  # "eig" or "expm"
    directional_weights: np.ndarray | None = None  # (T, 6)
    chirality: np.ndarray | None = None  # (T,)
    zero_population_flags: np.ndarray | None = None  # (T,) bool
    meta: dict = field(default_factory=dict)

    @property
    def array_population(self) -> np.ndarray:
        return self.populations[:, : self.n_array].sum(axis=1)

    @property
    def impurity_population(self) -> np.ndarray:
        return self.populations[:, self.n_array :].sum(axis=1)


def evolve(h: EffectiveHamiltonian, psi0: InitialState, times) -> DynamicsTrace:
    """Propagate ``psi0`` and record populations at the requested times."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1D sequence")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be sorted and non-negative")

    amp0 = psi0.amplitudes
    if amp0.shape[0] != h.size:
        raise ValueError(
            f"state dimension {amp0.shape[0]} does not match matrix size {h.size}"
        )

    evals, evecs = scipy.linalg.eig(h.matrix)
    cond = np.linalg.cond(evecs)
    if cond < EIGENBASIS_CONDITION_LIMIT:
        method = "eig"
        coeff = scipy.linalg.solve(evecs, amp0)
        phases = np.exp(-1j * np.outer(times, evals))  # (T, M)
        psi = (phases * coeff[np.newaxis, :]) @ evecs.T
    else:
        method = "expm"
        psi = np.empty((times.size, h.size), dtype=complex)
        state = amp0.copy()
        prev_t = 0.0
        for i, t in enumerate(times):
            if t > prev_t:
                state = scipy.linalg.expm(-1j * h.matrix * (t - prev_t)) @ state
                prev_t = t
            psi[i] = state

    populations = np.abs(psi) ** 2
    return DynamicsTrace(
        times=times,
        amplitudes=psi,
        populations=populations,
        total_norm=populations.sum(axis=1),
        basis_labels=h.basis_labels,
        n_array=h.n_array,
        method=method,
        meta={"eigenbasis_condition": float(cond)},
    )


def sector_angles() -> np.ndarray:
    """Sector centers: the six lattice axis directions, radians."""
    return np.deg2rad(np.arange(0, 360, 60, dtype=float))


DEFAULT_SECTOR_EXCLUSION_D = 2.5


def directional_weights(
    trace: DynamicsTrace,
    lat: Lattice,
    anchor: ImpurityPlacement | np.ndarray,
    exclusion_radius_d: float = DEFAULT_SECTOR_EXCLUSION_D,
) -> np.ndarray:
    """Population share per 60-degree sector about the anchor, per snapshot.

    The near field around the impurity is a quasi-isotropic bound cloud, not
    propagating emission, so atoms within ``exclusion_radius_d`` intercell
    spacings of the anchor are excluded from the binning (set it to 0 to
    count every atom).  Weights are normalized by the binned population of
    each snapshot; snapshots with zero binned population get zero weights and
    a raised flag in ``trace.zero_population_flags``.
    """
    anchor_xy = (
        anchor.position[:2] if isinstance(anchor, ImpurityPlacement) else np.asarray(anchor)[:2]
    )
    rel = lat.positions[:, :2] - anchor_xy[np.newaxis, :]
    radius = np.linalg.norm(rel, axis=1)
    defined = radius > max(1e-9, exclusion_radius_d * lat.spec.d)
    angle = np.arctan2(rel[:, 1], rel[:, 0])
    sector = (np.round(angle / (np.pi / 3.0)).astype(int) % N_SECTORS)

    arr_pop = trace.populations[:, : trace.n_array]
    weights = np.zeros((trace.times.size, N_SECTORS))
    for s in range(N_SECTORS):
        in_sector = defined & (sector == s)
        weights[:, s] = arr_pop[:, in_sector].sum(axis=1)
    totals = weights.sum(axis=1)
    flags = totals <= 1e-300
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(flags[:, None], 0.0, weights / np.maximum(totals, 1e-300)[:, None])

    trace.directional_weights = weights
    trace.zero_population_flags = flags
    return weights


def chirality_series(
    trace: DynamicsTrace,
    lat: Lattice,
    anchor: ImpurityPlacement | np.ndarray,
    bin_width_d: float = 1.0,
    harmonic: int = 3,
) -> np.ndarray:
    """Spiral handedness of the array population pattern, in [-1, 1].

    For each radial bin b around the anchor the population's angular
    harmonic c_b = sum_j p_j exp(i m phi_j) is computed; the chirality is the
    magnitude-weighted mean sine of the harmonic's phase advance between
    consecutive bins.  Zero for any mirror-symmetric pattern, positive for
    counterclockwise winding.
    """
    anchor_xy = (
        anchor.position[:2] if isinstance(anchor, ImpurityPlacement) else np.asarray(anchor)[:2]
    )
    rel = lat.positions[:, :2] - anchor_xy[np.newaxis, :]
    radius = np.linalg.norm(rel, axis=1)
    angle = np.arctan2(rel[:, 1], rel[:, 0])
    width = bin_width_d * lat.spec.d
    bins = np.floor(radius / width).astype(int)
    n_bins = int(bins.max()) + 1 if bins.size else 0
    phase_factor = np.exp(1j * harmonic * angle)

    arr_pop = trace.populations[:, : trace.n_array]
    c = np.zeros((trace.times.size, n_bins), dtype=complex)
    for b in range(n_bins):
        sel = bins == b
        if np.any(sel):
            c[:, b] = arr_pop[:, sel] @ phase_factor[sel]

    num = np.sum(np.imag(c[:, 1:] * np.conj(c[:, :-1])), axis=1)
    den = np.sum(np.abs(c[:, 1:]) * np.abs(c[:, :-1]), axis=1)
    out = np.where(den > 1e-12, num / np.maximum(den, 1e-300), 0.0)
    trace.chirality = out
    return out


# ---------------------------------------------------------------------------
# Named emission scenarios
#
# Parameter sets for the canned emission snapshots.  Sizes are desk-scale
# calibration choices (the flake used for the reference patterns is not part
# of the reference parameter set); fig5 scenarios use a flake whose central
# hexagon sits exactly on the three-fold symmetry center, fig3 scenarios put
# the impurity over the top corner.  All rates in Gamma0, lengths via d.

SCENARIOS: dict[str, dict] = {
    "fig5a": dict(
        delta=0.0, cells_per_side=11, anchor=ANCHOR_CENTRAL_HEXAGON,
        kind=IMPURITY_TWO_LEVEL, polarization=("x",), detuning=-3.06,
        zeeman=0.0, time=0.3,
    ),
    "fig5b": dict(
        delta=0.0, cells_per_side=11, anchor=ANCHOR_CENTRAL_HEXAGON,
        kind=IMPURITY_TWO_LEVEL, polarization=("y",), detuning=-3.06,
        zeeman=0.0, time=0.3,
    ),
    "fig5c": dict(
        delta=0.0, cells_per_side=15, anchor=ANCHOR_ADJACENT_CELL,
        kind=IMPURITY_TWO_LEVEL, polarization=("sigma+",), detuning=-3.06,
        zeeman=0.0, time=0.45,
    ),
    "fig5d": dict(
        delta=0.0, cells_per_side=15, anchor=ANCHOR_ADJACENT_CELL,
        kind=IMPURITY_TWO_LEVEL, polarization=("sigma-",), detuning=-3.06,
        zeeman=0.0, time=0.45,
    ),
    "fig5e": dict(
        delta=0.0, cells_per_side=11, anchor=ANCHOR_CENTRAL_HEXAGON,
        kind=IMPURITY_V_TYPE, polarization=(), detuning=48.26,
        zeeman=0.0, time=0.17,
    ),
    "fig5f": dict(
        delta=0.0, cells_per_side=11, anchor=ANCHOR_CENTRAL_HEXAGON,
        kind=IMPURITY_V_TYPE, polarization=(), detuning=48.26,
        zeeman=20.0, time=0.17,
    ),
    "fig3g": dict(
        delta=0.6, cells_per_side=10, anchor=ANCHOR_TOP_CORNER_SITE,
        kind=IMPURITY_TWO_LEVEL, polarization=("pi",), detuning=64.3,
        zeeman=0.0, time=2.0,
    ),
    "fig3h": dict(
        delta=0.6, cells_per_side=10, anchor=ANCHOR_TOP_CORNER_SITE,
        kind=IMPURITY_TWO_LEVEL, polarization=("sigma+",), detuning=64.3,
        zeeman=0.0, time=3.3,
    ),
    "fig3i": dict(
        delta=0.6, cells_per_side=10, anchor=ANCHOR_TOP_CORNER_SITE,
        kind=IMPURITY_TWO_LEVEL, polarization=("sigma-",), detuning=64.3,
        zeeman=0.0, time=3.3,
    ),
}

_POLARIZATIONS = {
    "x": lambda: Polarization.in_plane(0.0),
    "y": lambda: Polarization.in_plane(np.pi / 2.0),
    "pi": Polarization.out_of_plane,
    "sigma+": Polarization.sigma_plus,
    "sigma-": Polarization.sigma_minus,
}

# The scenario detunings above quote the reference values, which presuppose a
# particular lattice-sum regularization and array size.  Resonance with the
# corresponding spectral feature of THIS engine (saddle-point energies of the
# regularized Bloch bands, or the subradiant edge band of the delta=0.6
# flake) lands at the values below; recipes apply them as overrides and
# record both numbers in the run manifest.
SCENARIO_CALIBRATION: dict[str, dict] = {
    "fig5a": {"detuning": -4.81},   # middle-band saddle (M point) of this engine
    "fig5b": {"detuning": -4.81},
    "fig5c": {"detuning": -4.81},
    "fig5d": {"detuning": -4.81},
    "fig5e": {"detuning": 51.53},   # upper-band saddle 31.53 + Zeeman 20
    "fig5f": {"detuning": 51.53},
    "fig3g": {"detuning": 365.5},   # subradiant edge band of the delta=0.6 flake
    "fig3h": {"detuning": 365.5},
    "fig3i": {"detuning": 365.5},
}


def calibrated_scenario(
    name: str, overrides: dict | None = None, n_times: int = 25
) -> tuple[DynamicsTrace, Lattice, ImpurityPlacement]:
    """Emission scenario with the desk-scale resonance calibration applied."""
    params = dict(SCENARIO_CALIBRATION.get(name, {}))
    if overrides:
        params.update(overrides)
    trace, lat, placement = emission_scenario(name, overrides=params, n_times=n_times)
    trace.meta["calibration"] = {
        "applied": SCENARIO_CALIBRATION.get(name, {}),
        "reference_detuning": SCENARIOS[name]["detuning"],
    }
    return trace, lat, placement


def render_population_png(
    trace: DynamicsTrace,
    lat: Lattice,
    path,
    time_index: int = -1,
    log_floor: float = 1e-8,
) -> None:
    """Raster of the per-atom population at one snapshot, one marker per atom."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pop = trace.populations[time_index, : trace.n_array]
    fig, ax = plt.subplots(figsize=(5, 5))
    norm = matplotlib.colors.LogNorm(vmin=log_floor, vmax=max(pop.max(), 10 * log_floor))
    sc = ax.scatter(
        lat.positions[:, 0],
        lat.positions[:, 1],
        c=np.maximum(pop, log_floor),
        s=14,
        cmap="inferno",
        norm=norm,
    )
    ax.set_aspect("equal")
    ax.set_xlabel("x / lambda0")
    ax.set_ylabel("y / lambda0")
    ax.set_title(f"t Gamma0 = {trace.times[time_index]:.3g}")
    fig.colorbar(sc, ax=ax, label="population")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emission_scenario(
    name: str,
    overrides: dict | None = None,
    n_times: int = 25,
) -> tuple[DynamicsTrace, Lattice, ImpurityPlacement]:
    """Run a named emission snapshot with its reference defaults.

    ``overrides`` may replace any scenario key (delta, cells_per_side,
    anchor, detuning, linewidth, zeeman, polarization, time, d, height_d).
    The returned trace carries sector weights and chirality, its ``meta``
    echoes the resolved parameters.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid: {sorted(SCENARIOS)}")
    params = dict(SCENARIOS[name])
    params.setdefault("d", 0.1)
    params.setdefault("height_d", 0.4)
    params.setdefault("linewidth", 0.002)
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValueError(f"unknown scenario overrides: {sorted(unknown)}")
        params.update(overrides)

    spec = LatticeSpec(
        d=params["d"], delta=params["delta"], cells_per_side=params["cells_per_side"]
    )
    lat = build_flake(spec)
    placement = place_impurity(lat, params["anchor"], params["height_d"])
    if params["kind"] == IMPURITY_TWO_LEVEL:
        pol_a = _POLARIZATIONS[params["polarization"][0]]()
    else:
        pol_a = None
    imp = ImpuritySpec(
        detuning=params["detuning"],
        linewidth=params["linewidth"],
        kind=params["kind"],
        polarization=pol_a,
        zeeman=params["zeeman"],
        placement=placement,
    )
    h = assemble_with_impurity(lat, Polarization.out_of_plane(), imp)
    if params["kind"] == IMPURITY_TWO_LEVEL:
        psi0 = InitialState.impurity_excited(h)
    else:
        psi0 = InitialState.v_type_symmetric(h)
    times = np.linspace(0.0, params["time"], n_times)
    trace = evolve(h, psi0, times)
    directional_weights(trace, lat, placement)
    chirality_series(trace, lat, placement)
    trace.meta.update({"scenario": name, "params": params})
    return trace, lat, placement
