"""Grids, wavefunctions, physical parameters and low-rank density matrices.

Grid convention: every axis has ``n`` points at ``x_j = (j - n/2 + 1/2) * h``
with ``h = L / n``. The origin sits at the box centre, halfway between the
two middle points, so the reflection ``x -> -x`` maps index ``j`` onto
``n - 1 - j`` exactly. Boundaries are periodic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.constants
import scipy.fft

from .errors import DimensionError, ParameterError, SymmetryError

NORM_TOLERANCE = 1e-9
GRAM_CUTOFF = 1e-12


def fft_workers():
    """Thread count for FFTs, capped by the ``GRAVICAT_THREADS`` variable."""
    value = os.environ.get("GRAVICAT_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def fftn(a, axes=None):
    return scipy.fft.fftn(a, axes=axes, workers=fft_workers())


def ifftn(a, axes=None):
    return scipy.fft.ifftn(a, axes=axes, workers=fft_workers())


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid, 1D or cubic 3D."""

    dim: int
    n_points: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise DimensionError(f"dim must be 1 or 3, got {self.dim}")
        n = self.n_points
        if n < 16 or n & (n - 1):
            raise ParameterError(f"n_points must be a power of two >= 16, got {n}")
        if not self.box_length > 0:
            raise ParameterError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self):
        return self.box_length / self.n_points

    @property
    def shape(self):
        return (self.n_points,) * self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @cached_property
    def axis(self):
        n = self.n_points
        return (np.arange(n) - n / 2 + 0.5) * self.spacing

    @cached_property
    def wavenumbers(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    def coords(self):
        """Open-mesh coordinate arrays, one per axis, broadcastable to ``shape``."""
        if self.dim == 1:
            return [self.axis]
        return list(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij", sparse=True))

    def k_vectors(self):
        if self.dim == 1:
            return [self.wavenumbers]
        k = self.wavenumbers
        return list(np.meshgrid(k, k, k, indexing="ij", sparse=True))

    @cached_property
    def k_squared(self):
        return sum(kk**2 for kk in self.k_vectors())

    @cached_property
    def radius_squared(self):
        return sum(x**2 for x in self.coords())

    @property
    def k_max(self):
        return np.pi / self.spacing * np.sqrt(self.dim)

    def reflect(self, values, axis=None):
        """Mirror an array through the box centre (all axes, or only ``axis``)."""
        axes = range(self.dim) if axis is None else [axis]
        out = values
        for ax in axes:
            out = np.flip(out, axis=ax)
        return np.ascontiguousarray(out)


@dataclass(frozen=True)
class Params:
    """Physical constants.

    In ``dimensionless`` mode ``hbar = G = 1`` and masses are measured in a
    reference mass ``M0`` (so the reference soliton has ``M = 1``). Lengths are
    then in units of ``hbar^2 / (G M0^3)``, times in ``hbar^3 / (G^2 M0^5)`` and
    energies in ``G^2 M0^5 / hbar^2``.
    """

    hbar: float = 1.0
    G: float = 1.0
    M: float = 1.0
    c: float = 1.0
    alpha: float = 1.0
    unit_system: str = "dimensionless"

    def __post_init__(self):
        if self.unit_system not in ("SI", "dimensionless"):
            raise ParameterError(f"unknown unit system {self.unit_system!r}")
        for name in ("hbar", "G", "M", "c", "alpha"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be strictly positive, got {value}")
        if self.unit_system == "dimensionless" and (self.hbar != 1.0 or self.G != 1.0):
            raise ParameterError("dimensionless mode requires hbar = G = 1")

    @classmethod
    def dimensionless(cls, M=1.0, alpha=1.0, c=1.0):
        return cls(hbar=1.0, G=1.0, M=M, c=c, alpha=alpha, unit_system="dimensionless")

    @classmethod
    def si(cls, M, alpha=1.0, G=scipy.constants.G):
        return cls(hbar=scipy.constants.hbar, G=G, M=M, c=scipy.constants.c,
                   alpha=alpha, unit_system="SI")

    def with_mass(self, M):
        return replace(self, M=M)

    @property
    def length_unit(self):
        return self.hbar**2 / (self.G * self.M**3)

    @property
    def time_unit(self):
        return self.hbar**3 / (self.G**2 * self.M**5)

    @property
    def energy_unit(self):
        return self.G**2 * self.M**5 / self.hbar**2


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Unit-norm complex amplitudes on a grid."""

    grid: Grid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != self.grid.shape:
            raise DimensionError(
                f"amplitude shape {amps.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(amps)):
            raise ParameterError("amplitudes contain NaN or Inf")
        norm = np.sum(np.abs(amps) ** 2) * self.grid.cell_volume
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ParameterError(f"wavefunction norm {norm!r} is not 1")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, grid, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.sqrt(np.sum(np.abs(amps) ** 2) * grid.cell_volume)
        if not norm > 0:
            raise ParameterError("cannot normalize a zero wavefunction")
        return cls(grid, amps / norm)

    @classmethod
    def gaussian(cls, grid, sigma, center=0.0, momentum=0.0):
        """Gaussian packet whose density has standard deviation ``sigma`` per axis."""
        x = grid.coords()
        c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (grid.dim,))
        p = np.broadcast_to(np.atleast_1d(np.asarray(momentum, dtype=float)), (grid.dim,))
        arg = sum((xi - ci) ** 2 for xi, ci in zip(x, c)) / (4 * sigma**2)
        phase = sum(xi * pi for xi, pi in zip(x, p))
        return cls.normalized(grid, np.exp(-arg + 1j * phase))

    @property
    def density(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return float(np.sum(self.density) * self.grid.cell_volume)

    def reflected(self, axis=None):
        return WaveFunction(self.grid, self.grid.reflect(self.amplitudes, axis))

    def translated(self, displacement):
        """Shift by ``displacement`` (scalar in 1D, 3-vector in 3D) via spectral phases."""
        d = np.broadcast_to(np.atleast_1d(np.asarray(displacement, dtype=float)), (self.grid.dim,))
        spectrum = fftn(self.amplitudes)
        n = self.grid.n_points
        for k, shift in zip(self.grid.k_vectors(), d):
            if shift == 0:
                continue
            factor = np.exp(-1j * k * shift)
            # keep the Nyquist coefficient real so real fields stay real
            factor.flat[n // 2] = np.cos(np.pi / self.grid.spacing * shift)
            spectrum = spectrum * factor
        return WaveFunction.normalized(self.grid, ifftn(spectrum))


@dataclass(frozen=True)
class PureEnsemble:
    """Weighted pure states representing the density matrix ``sum w |psi><psi|``."""

    members: tuple

    def __post_init__(self):
        members = tuple((float(w), s) for w, s in self.members)
        if not members:
            raise ParameterError("ensemble needs at least one member")
        weights = np.array([w for w, _ in members])
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must be non-negative and sum to 1, got {weights}")
        grid = members[0][1].grid
        if any(s.grid != grid for _, s in members):
            raise DimensionError("ensemble members live on different grids")
        object.__setattr__(self, "members", members)

    @property
    def grid(self):
        return self.members[0][1].grid

    @property
    def weights(self):
        return np.array([w for w, _ in self.members])

    @property
    def states(self):
        return [s for _, s in self.members]


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise DimensionError(f"grid mismatch: {a.grid} vs {b.grid}")


def inner(a, b):
    """Discrete inner product <a|b>."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.cell_volume)


def expectation_x(psi):
    """Centroid of the density; a length-``dim`` array."""
    rho = psi.density
    total = rho.sum()
    return np.array([np.sum(x * rho) / total for x in psi.grid.coords()])


def lobe_separation(psi, axis=0, symmetry_tolerance=0.01):
    """Twice the centroid of the density restricted to the positive half-axis.

    Requires the density to be mirror-symmetric about the box centre along
    ``axis``; the L1 asymmetry must stay below ``symmetry_tolerance``.
    """
    grid = psi.grid
    rho = psi.density
    rho_line = rho if grid.dim == 1 else rho.sum(axis=tuple(a for a in range(3) if a != axis))
    asym = np.sum(np.abs(rho_line - rho_line[::-1])) / np.sum(rho_line)
    if asym > symmetry_tolerance:
        raise SymmetryError(f"density asymmetry {asym:.3g} exceeds {symmetry_tolerance}")
    half = grid.n_points // 2
    x = grid.axis[half:]
    w = rho_line[half:]
    return float(2 * np.sum(x * w) / np.sum(w))


def _gram_basis(states, cutoff=GRAM_CUTOFF):
    """Coefficient vectors of ``states`` in an orthonormal basis of their span."""
    dv = states[0].grid.cell_volume
    S = np.stack([s.amplitudes.ravel() for s in states], axis=1)
    gram = (S.conj().T @ S) * dv
    evals, evecs = np.linalg.eigh(gram)
    keep = evals > cutoff
    # coefficients c_j = Lambda^{-1/2} U^H G[:, j]
    return (evecs[:, keep].conj().T @ gram) / np.sqrt(evals[keep])[:, None]


def density_matrix_gram(e1, e2, cutoff=GRAM_CUTOFF):
    """Trace distance between the density matrices of two pure-state ensembles.

    Works in the span of all member states: the union is orthonormalized
    through an eigendecomposition of its Gram matrix (directions with
    eigenvalue below ``cutoff`` are dropped), both density matrices are
    projected into that basis and the half absolute eigenvalue sum of their
    difference is returned.
    """
    if e1.grid != e2.grid:
        raise DimensionError("ensembles live on different grids")
    states = e1.states + e2.states
    if len(states) > 64:
        raise ParameterError(f"at most 64 member states supported, got {len(states)}")
    coeffs = _gram_basis(states, cutoff)
    weights = np.concatenate([e1.weights, -e2.weights])
    diff = (coeffs * weights) @ coeffs.conj().T
    diff = 0.5 * (diff + diff.conj().T)
    dist = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)))
    return float(min(max(dist, 0.0), 1.0))


trace_distance = density_matrix_gram
