"""State-dependent potentials.

Newtonian self-potentials are computed as open-boundary convolutions: the
density is zero-padded to twice the box per axis and convolved with the
Green's function sampled on the padded grid, so no periodic image ever
contributes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import DimensionError, ParameterError
from .field import Grid, fft_workers

# Minus the Epstein zeta value Z(1/2) = sum'_{n in Z^3} |n|^-1 (analytically
# continued). As the origin weight of the 1/r kernel it turns the punctured
# lattice sum into a corrected trapezoidal rule: the leading O(h^2) error of
# the plain sum cancels exactly, leaving an error of higher order.
LATTICE_SELF_TERM = 2.8372974794806196

DEFAULT_SOFTENING = 1.0


@dataclass(frozen=True)
class PotentialField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise DimensionError("potential shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("potential contains non-finite values")


def _padded_displacements(grid):
    n = grid.n_points
    m = np.arange(2 * n)
    return np.where(m < n, m, m - 2 * n) * grid.spacing


@lru_cache(maxsize=16)
def _kernel_spectrum(grid, softening):
    """Real FFT of the Green's function on the doubled grid."""
    d = _padded_displacements(grid)
    if grid.dim == 1:
        # cell average of 1/sqrt(x^2 + a^2); stays accurate when a < h
        h = grid.spacing
        kernel = (np.arcsinh((d + 0.5 * h) / softening)
                  - np.arcsinh((d - 0.5 * h) / softening)) / h
    else:
        x, y, z = np.meshgrid(d, d, d, indexing="ij", sparse=True)
        r = np.sqrt(x**2 + y**2 + z**2)
        with np.errstate(divide="ignore"):
            kernel = 1.0 / r
        kernel[0, 0, 0] = LATTICE_SELF_TERM / grid.spacing
    return scipy.fft.rfftn(kernel, workers=fft_workers())


def newton_field(density, grid, G, M, softening=None):
    """Gravitational potential per unit mass, ``-G M int rho(r) K(x - r) dr``.

    ``K`` is ``1/|x|`` in 3D (``softening`` must be None) and
    ``1/sqrt(x^2 + a^2)`` in 1D with ``a = softening``.
    """
    density = np.asarray(density, dtype=float)
    if density.shape != grid.shape:
        raise DimensionError("density shape does not match grid")
    if grid.dim == 3:
        if softening is not None:
            raise ParameterError("3D kernel is not softened")
        softening = 0.0
    elif softening is None or not softening > 0:
        raise ParameterError(f"1D softening length must be positive, got {softening}")
    n = grid.n_points
    workers = fft_workers()
    spec = scipy.fft.rfftn(density, s=(2 * n,) * grid.dim, workers=workers)
    conv = scipy.fft.irfftn(spec * _kernel_spectrum(grid, float(softening)),
                            s=(2 * n,) * grid.dim, workers=workers)
    conv = conv[(slice(0, n),) * grid.dim]
    # Round-off can push far-field values a hair above zero; the field is
    # a sum of non-positive terms.
    return np.minimum(-G * M * grid.cell_volume * conv, 0.0)


def newton_potential_3d(psi, params):
    """Newton self-potential ``Phi_psi`` of a 3D wavefunction (energy per mass)."""
    if psi.grid.dim != 3:
        raise DimensionError("newton_potential_3d needs a 3D wavefunction")
    return PotentialField(psi.grid, newton_field(psi.density, psi.grid, params.G, params.M))


def newton_potential_1d(psi, params, a=DEFAULT_SOFTENING):
    """Softened 1D analogue of the Newton self-potential."""
    if psi.grid.dim != 1:
        raise DimensionError("newton_potential_1d needs a 1D wavefunction")
    if not a > 0:
        raise ParameterError(f"softening length must be positive, got {a}")
    return PotentialField(psi.grid, newton_field(psi.density, psi.grid, params.G, params.M, a))


def janossy_field(density, grid, alpha):
    x = grid.axis
    mean = np.sum(x * density) / np.sum(density)
    return 0.5 * alpha**2 * (x - mean) ** 2


def janossy_potential(psi, params):
    """Contractive potential ``alpha^2 (x - <x>)^2 / 2`` (energy units)."""
    if psi.grid.dim != 1:
        raise DimensionError("the Janossy potential is defined in 1D")
    return PotentialField(psi.grid, janossy_field(psi.density, psi.grid, params.alpha))


class StateDependentPotential:
    """A potential ``V[psi](x)`` that depends on the state only through its density.

    Subclasses implement :meth:`field`, returning the potential energy that
    multiplies ``psi`` in the Schrodinger equation, and set
    ``energy_weight`` so that the interaction energy is
    ``energy_weight * int V |psi|^2`` (1/2 for pair interactions).
    """

    kind = "abstract"
    energy_weight = 1.0

    def field(self, density, grid, params):
        raise NotImplementedError

    def interaction_energy(self, density, grid, params, values=None):
        if values is None:
            values = self.field(density, grid, params)
        return float(self.energy_weight * np.sum(values * density) * grid.cell_volume)

    @staticmethod
    def from_kind(kind, softening=DEFAULT_SOFTENING):
        kinds = {
            "none": NoPotential,
            "newton3d": Newton3D,
            "janossy": Janossy,
        }
        if kind == "newton1d_soft":
            return Newton1DSoft(softening)
        if kind not in kinds:
            raise ParameterError(f"unknown potential kind {kind!r}")
        return kinds[kind]()

    @staticmethod
    def newton(dim, softening=DEFAULT_SOFTENING):
        return Newton3D() if dim == 3 else Newton1DSoft(softening)


@dataclass(frozen=True)
class NoPotential(StateDependentPotential):
    """Linear limit: ``V = 0``."""

    kind = "none"
    energy_weight = 0.0

    def field(self, density, grid, params):
        return np.zeros(grid.shape)


@dataclass(frozen=True)
class Newton3D(StateDependentPotential):
    kind = "newton3d"
    energy_weight = 0.5

    def field(self, density, grid, params):
        if grid.dim != 3:
            raise DimensionError("newton3d needs a 3D grid")
        return params.M * newton_field(density, grid, params.G, params.M)


@dataclass(frozen=True)
class Newton1DSoft(StateDependentPotential):
    softening: float = DEFAULT_SOFTENING
    kind = "newton1d_soft"
    energy_weight = 0.5

    def __post_init__(self):
        if not self.softening > 0:
            raise ParameterError(f"softening length must be positive, got {self.softening}")

    def rescaled(self, length_factor):
        """Same kernel with every length multiplied by ``length_factor``."""
        return Newton1DSoft(self.softening * length_factor)

    def field(self, density, grid, params):
        if grid.dim != 1:
            raise DimensionError("newton1d_soft needs a 1D grid")
        return params.M * newton_field(density, grid, params.G, params.M, self.softening)


@dataclass(frozen=True)
class Janossy(StateDependentPotential):
    # Var(x) has functional derivative (x - <x>)^2 - <x>^2, so the energy
    # alpha^2 Var(x) / 2 differs from int V |psi|^2 only by a constant shift of mu.
    kind = "janossy"
    energy_weight = 1.0

    def field(self, density, grid, params):
        if grid.dim != 1:
            raise DimensionError("the Janossy potential is defined in 1D")
        return janossy_field(density, grid, params.alpha)


__all__ = [
    "PotentialField", "StateDependentPotential", "NoPotential", "Newton3D",
    "Newton1DSoft", "Janossy", "newton_field", "newton_potential_3d",
    "newton_potential_1d", "janossy_potential", "LATTICE_SELF_TERM",
]
