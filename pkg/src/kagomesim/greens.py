"""Free-space electromagnetic dipole-dipole couplings.

Everything downstream is built from two ingredients: the free-space dyadic
Green's tensor of a point dipole and the dimensionless pair coupling obtained
by contracting it with two polarization vectors.  Lengths are measured in
units of the transition wavelength (lambda0 = 1, so k0 = 2*pi) and energies
in units of the single-atom linewidth Gamma0.

Sign convention: the coupling ``g`` is defined so that the effective
Hamiltonian entry is H_ij = hbar*Gamma0*g(i, j) and the continuation of g to
zero separation equals -i/2, matching the -i*Gamma0/2 diagonal of the
single-atom term.  With this choice the collective decay matrix
Gamma_ij = -2*Im(H_ij) is positive semidefinite (a Gram matrix of radiation
patterns), and for two coincident atoms the collective rates are the Dicke
pair {2*Gamma0, 0}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

K0 = 2.0 * np.pi  # transition wavenumber for lambda0 = 1

#: Below this separation (units of lambda0) the 1/(k0 r)^3 near field is
#: considered numerically meaningless and `coupling` raises instead of
#: returning a huge value.
DEFAULT_MIN_SEPARATION = 1e-4


class CoincidentAtomsError(ValueError):
    """Two dipoles closer than the minimum-separation guard."""


@dataclass(frozen=True)
class Polarization:
    """Unit-normalized complex dipole orientation.

    The components are stored as a plain tuple so instances are hashable and
    cheap to pass between worker processes; use ``.array`` for numerics.
    """

    components: tuple[complex, complex, complex]

    def __post_init__(self):
        v = np.asarray(self.components, dtype=complex)
        norm = np.sqrt(np.real(np.vdot(v, v)))
        if norm < 1e-300:
            raise ValueError("polarization vector must be nonzero")
        object.__setattr__(self, "components", tuple(v / norm))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=complex)

    @classmethod
    def out_of_plane(cls) -> "Polarization":
        """pi polarization along z."""
        return cls((0.0, 0.0, 1.0))

    @classmethod
    def in_plane(cls, theta: float) -> "Polarization":
        """Linear in-plane polarization cos(theta) x + sin(theta) y."""
        return cls((np.cos(theta), np.sin(theta), 0.0))

    @classmethod
    def sigma_plus(cls) -> "Polarization":
        """Circular sigma+ transition, (-x - i y)/sqrt(2)."""
        return cls((-1.0, -1.0j, 0.0))

    @classmethod
    def sigma_minus(cls) -> "Polarization":
        """Circular sigma- transition, (x - i y)/sqrt(2)."""
        return cls((1.0, -1.0j, 0.0))

    def conjugate(self) -> "Polarization":
        return Polarization(tuple(np.conj(self.array)))


def green_tensor(r: np.ndarray, k0: float = K0) -> np.ndarray:
    """Free-space dyadic Green's tensor at separation ``r`` (3-vector).

    G(r) = e^{i k0 r}/(4 pi r) [ (1 + i/(k0 r) - 1/(k0 r)^2) I
                                - (1 + 3i/(k0 r) - 3/(k0 r)^2) rhat rhat ]

    The tensor is complex symmetric, even in r, and its imaginary part tends
    to (k0 / 6 pi) * I as r -> 0.

    Raises
    ------
    CoincidentAtomsError
        If ``|r| == 0`` (the self term is handled at the Hamiltonian level).
    """
    r = np.asarray(r, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        raise CoincidentAtomsError("Green's tensor is singular at zero separation")
    x = k0 * dist
    rhat = r / dist
    scalar = np.exp(1j * x) / (4.0 * np.pi * dist)
    a = 1.0 + 1j / x - 1.0 / x**2
    b = 1.0 + 3j / x - 3.0 / x**2
    return scalar * (a * np.eye(3) - b * np.outer(rhat, rhat))


def coupling(
    pos_i: np.ndarray,
    pos_j: np.ndarray,
    pol_i: Polarization,
    pol_j: Polarization,
    k0: float = K0,
    min_separation: float = DEFAULT_MIN_SEPARATION,
) -> complex:
    """Dimensionless coupling coefficient between two dipoles.

    g = -(3 pi / k0) * p_i^* . G(pos_i - pos_j) . p_j

    so that the Hamiltonian entry is hbar*Gamma0*g and g -> -i/2 as the
    separation vanishes.  Reciprocity holds in the form
    g(r; p_i, p_j) = g(-r; p_j^*, p_i^*) (swap atoms, conjugate both
    polarizations); for linear polarizations swapping the atoms alone leaves
    g unchanged.
    """
    sep = np.asarray(pos_i, dtype=float) - np.asarray(pos_j, dtype=float)
    dist = float(np.linalg.norm(sep))
    if dist < min_separation:
        raise CoincidentAtomsError(
            f"dipole separation {dist:.3e} below guard {min_separation:.3e} "
            "(units of lambda0)"
        )
    g = coupling_batch(sep[np.newaxis, :], pol_i, pol_j, k0=k0)
    return complex(g[0])


def coupling_batch(
    separations: np.ndarray,
    pol_i: Polarization,
    pol_j: Polarization,
    k0: float = K0,
) -> np.ndarray:
    """Vectorized coupling for an (n, 3) array of separation vectors.

    No minimum-separation guard is applied here; callers are expected to
    have masked zero/near-zero separations already.
    """
    sep = np.atleast_2d(np.asarray(separations, dtype=float))
    dist = np.linalg.norm(sep, axis=1)
    x = k0 * dist
    inv_x = 1.0 / x
    pi = np.conj(pol_i.array)
    pj = pol_j.array
    # p_i^* . I . p_j and p_i^* . (rhat rhat) . p_j for every separation
    dot_ij = complex(pi @ pj)
    proj_i = sep @ pi / dist
    proj_j = sep @ pj / dist
    a = 1.0 + 1j * inv_x - inv_x**2
    b = 1.0 + 3j * inv_x - 3.0 * inv_x**2
    contraction = np.exp(1j * x) / (4.0 * np.pi * dist) * (
        a * dot_ij - b * proj_i * proj_j
    )
    return -(3.0 * np.pi / k0) * contraction
