"""Breathing-kagome flake geometry.

A flake is a triangle of L*(L+1)/2 upward-pointing unit triangles ("cells"),
one per node (n1, n2) of the triangular Bravais lattice with n1, n2 >= 0 and
n1 + n2 <= L - 1.  Each cell hosts three atoms A, B, C at mutual distance
R_a = (1 + delta)*d/2; nearest atoms of adjacent cells sit at distance
R_b = d - R_a.  The three flake corners terminate on single sites, one per
sublattice, which is the termination that supports single-corner modes.

All lengths are in units of the transition wavelength lambda0 = 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SQ3 = np.sqrt(3.0)

ANCHOR_CENTRAL_HEXAGON = "central_hexagon"
ANCHOR_ADJACENT_CELL = "adjacent_cell"
ANCHOR_TOP_CORNER_SITE = "top_corner_site"
VALID_ANCHORS = (ANCHOR_CENTRAL_HEXAGON, ANCHOR_ADJACENT_CELL, ANCHOR_TOP_CORNER_SITE)

SUBLATTICES = ("A", "B", "C")


class LatticeSpecError(ValueError):
    """Invalid lattice construction parameters."""


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry parameters of the flake.

    d : intercell spacing (units of lambda0)
    delta : spacing imbalance, -1 < delta < 1; R_a = (1 + delta)*d/2
    cells_per_side : number of unit cells along each edge of the triangle
    lambda0 : transition wavelength; kept for metadata, always 1.0 internally
    """

    d: float
    delta: float
    cells_per_side: int
    lambda0: float = 1.0

    def __post_init__(self):
        if not -1.0 < self.delta < 1.0:
            raise LatticeSpecError(f"delta must lie in (-1, 1), got {self.delta}")
        if self.cells_per_side < 2:
            raise LatticeSpecError(
                f"cells_per_side must be >= 2, got {self.cells_per_side}"
            )
        if self.d <= 0:
            raise LatticeSpecError(f"d must be positive, got {self.d}")

    @property
    def r_a(self) -> float:
        """Intracell spacing (side of the upward triangles)."""
        return 0.5 * (1.0 + self.delta) * self.d

    @property
    def r_b(self) -> float:
        """Intercell nearest-neighbor spacing (side of the downward triangles)."""
        return self.d - self.r_a

    @property
    def n_atoms(self) -> int:
        L = self.cells_per_side
        return 3 * L * (L + 1) // 2

    @property
    def bravais(self) -> np.ndarray:
        """Primitive vectors of the underlying triangular lattice, shape (2, 3)."""
        return np.array(
            [[self.d, 0.0, 0.0], [0.5 * self.d, 0.5 * SQ3 * self.d, 0.0]]
        )


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """In-plane displacement field applied to a clean lattice."""

    displacements: np.ndarray  # (N, 2)
    strength: float  # kappa, fraction of R_a
    seed: int


@dataclass(frozen=True, eq=False)
class Lattice:
    """A built flake: positions plus site bookkeeping.

    corner_sites holds the three single-sublattice corner atoms in the order
    (bottom-left A, bottom-right B, top C).  edge_sets holds the atoms of the
    three open edges excluding the corner sites, ordered by edge direction
    theta = 0 (bottom), pi/3 (left), 2*pi/3 (right).
    """

    spec: LatticeSpec
    positions: np.ndarray  # (N, 3), z = 0 for the clean flake
    sublattice: np.ndarray  # (N,) of "A" | "B" | "C"
    cell_index: np.ndarray  # (N,) int
    corner_sites: np.ndarray  # (3,) int
    edge_sets: tuple[np.ndarray, np.ndarray, np.ndarray]
    disorder: DisorderRealization | None = field(default=None, compare=False)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def min_pair_distance(self) -> float:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())


@dataclass(frozen=True, eq=False)
class ImpurityPlacement:
    """Impurity position above the flake plane."""

    position: np.ndarray  # absolute 3D coordinates, units of lambda0
    height_d: float  # vertical offset in units of the intercell spacing d
    anchor: str

    def __post_init__(self):
        if self.height_d <= 0:
            raise ValueError(f"impurity height must be positive, got {self.height_d}")
        if self.anchor not in VALID_ANCHORS:
            raise ValueError(f"unknown anchor {self.anchor!r}")


def build_flake(spec: LatticeSpec) -> Lattice:
    """Construct the triangular breathing-kagome flake for ``spec``."""
    L = spec.cells_per_side
    a1, a2 = spec.bravais
    # atom offsets within a cell: equilateral up-triangle of side R_a
    offsets = np.array(
        [
            [0.0, 0.0, 0.0],
            [spec.r_a, 0.0, 0.0],
            [0.5 * spec.r_a, 0.5 * SQ3 * spec.r_a, 0.0],
        ]
    )
    positions = []
    sublattice = []
    cell_index = []
    cell_of = {}
    cell = 0
    for n2 in range(L):
        for n1 in range(L - n2):
            origin = n1 * a1 + n2 * a2
            cell_of[(n1, n2)] = cell
            for s, off in zip(SUBLATTICES, offsets):
                positions.append(origin + off)
                sublattice.append(s)
                cell_index.append(cell)
            cell += 1

    positions = np.array(positions)
    sublattice = np.array(sublattice)
    cell_index = np.array(cell_index, dtype=int)

    def atom(n1, n2, s):
        return 3 * cell_of[(n1, n2)] + SUBLATTICES.index(s)

    corners = np.array(
        [atom(0, 0, "A"), atom(L - 1, 0, "B"), atom(0, L - 1, "C")], dtype=int
    )
    bottom = [atom(n1, 0, s) for n1 in range(L) for s in ("A", "B")]
    left = [atom(0, n2, s) for n2 in range(L) for s in ("A", "C")]
    right = [atom(L - 1 - n2, n2, s) for n2 in range(L) for s in ("B", "C")]
    corner_set = set(corners.tolist())
    edge_sets = tuple(
        np.array(sorted(set(e) - corner_set), dtype=int)
        for e in (bottom, left, right)
    )
    return Lattice(
        spec=spec,
        positions=positions,
        sublattice=sublattice,
        cell_index=cell_index,
        corner_sites=corners,
        edge_sets=edge_sets,
    )


def apply_disorder(lat: Lattice, kappa: float, seed: int) -> Lattice:
    """Shift each atom in-plane by exactly kappa*R_a in a random direction.

    Deterministic for a given seed; corner and edge bookkeeping is carried
    over unchanged since the disorder does not relabel sites.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, lat.n_atoms)
    shift = kappa * lat.spec.r_a
    displacements = shift * np.column_stack([np.cos(angles), np.sin(angles)])
    positions = lat.positions.copy()
    positions[:, :2] += displacements
    return Lattice(
        spec=lat.spec,
        positions=positions,
        sublattice=lat.sublattice,
        cell_index=lat.cell_index,
        corner_sites=lat.corner_sites,
        edge_sets=lat.edge_sets,
        disorder=DisorderRealization(displacements, kappa, seed),
    )


def hexagon_centers(lat: Lattice) -> np.ndarray:
    """Centers of all complete hexagonal plaquettes of the flake.

    The hexagon associated with cell (n1, n2) is the ring formed with cells
    (n1+1, n2) and (n1, n2+1); its center is the conventional unit-cell
    center origin + (a1 + a2)/2.
    """
    L = lat.spec.cells_per_side
    a1, a2 = lat.spec.bravais
    centers = [
        n1 * a1 + n2 * a2 + 0.5 * (a1 + a2)
        for n2 in range(L - 1)
        for n1 in range(L - 1 - n2)
    ]
    return np.array(centers)


def central_hexagon_center(lat: Lattice) -> np.ndarray:
    """Center of the hexagonal plaquette closest to the flake centroid.

    Ties (the centroid can sit on a cell center equidistant from three
    hexagons) break toward the lexicographically smallest (y, x) center, so
    the choice is deterministic.
    """
    if lat.spec.cells_per_side < 3:
        raise LatticeSpecError(
            "central_hexagon anchor needs cells_per_side >= 3"
        )
    centers = hexagon_centers(lat)
    dist = np.linalg.norm(centers[:, :2] - lat.centroid[np.newaxis, :2], axis=1)
    order = np.lexsort((centers[:, 0], centers[:, 1], np.round(dist, 9)))
    return centers[order[0]]


def place_impurity(lat: Lattice, anchor: str, height_d: float = 0.4) -> ImpurityPlacement:
    """Position an impurity atom ``height_d * d`` above the flake plane.

    central_hexagon : above the hexagonal plaquette nearest the centroid
    adjacent_cell   : above the center of the unit cell one Bravais vector
                      (+a1) over from that hexagon, at horizontal distance d
    top_corner_site : directly above the top corner atom
    """
    if anchor not in VALID_ANCHORS:
        raise ValueError(f"unknown anchor {anchor!r}; valid: {VALID_ANCHORS}")
    if height_d <= 0:
        raise ValueError(f"impurity height must be positive, got {height_d}")
    if anchor == ANCHOR_TOP_CORNER_SITE:
        base = lat.positions[lat.corner_sites[2]]
    else:
        base = central_hexagon_center(lat)
        if anchor == ANCHOR_ADJACENT_CELL:
            base = base + lat.spec.bravais[0]
    position = np.array([base[0], base[1], height_d * lat.spec.d])
    return ImpurityPlacement(position=position, height_d=height_d, anchor=anchor)


def lattice_to_csv(lat: Lattice, path: str | Path) -> None:
    """Write atom positions as CSV (atom_id, sublattice, cell_index, x, y, z)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["atom_id", "sublattice", "cell_index", "x", "y", "z"])
        for i in range(lat.n_atoms):
            x, y, z = lat.positions[i]
            writer.writerow(
                [i, lat.sublattice[i], int(lat.cell_index[i]),
                 repr(float(x)), repr(float(y)), repr(float(z))]
            )


def lattice_manifest(lat: Lattice) -> dict:
    """Spec echo plus derived constants, for the JSON sidecar."""
    spec = lat.spec
    manifest = {
        "spec": {
            "d": spec.d,
            "delta": spec.delta,
            "cells_per_side": spec.cells_per_side,
            "lambda0": spec.lambda0,
        },
        "derived": {
            "r_a": spec.r_a,
            "r_b": spec.r_b,
            "n_atoms": lat.n_atoms,
        },
    }
    if lat.disorder is not None:
        manifest["disorder"] = {
            "strength": lat.disorder.strength,
            "seed": lat.disorder.seed,
        }
    return manifest


def write_lattice_manifest(lat: Lattice, path: str | Path) -> None:
    Path(path).write_text(json.dumps(lattice_manifest(lat), indent=2) + "\n")
