"""Named states: displaced solitons, cat states, the L/R projector, ensembles."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, DimensionError
from .field import PureEnsemble, WaveFunction, inner


@dataclass(frozen=True)
class CatSpec:
    """Two soliton copies at ``-ell/2`` (left) and ``+ell/2`` (right) along ``axis``."""

    ell: float
    sign: int = +1
    axis: int = 0

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise ConstructionError(f"sign must be +1 or -1, got {self.sign}")
        if not self.ell > 0:
            raise ConstructionError(f"ell must be positive, got {self.ell}")

    def with_sign(self, sign):
        return CatSpec(self.ell, sign, self.axis)


def _check_spec(soliton, spec):
    grid = soliton.grid
    if spec.axis not in range(grid.dim):
        raise DimensionError(f"axis {spec.axis} out of range for a {grid.dim}D grid")
    d = soliton.fwhm
    if spec.ell < 2 * d:
        raise ConstructionError(f"ell = {spec.ell:g} is below twice the soliton diameter {d:.3g}")
    if spec.ell < 4 * d:
        warnings.warn(f"ell = {spec.ell:g} is below four soliton diameters ({4 * d:.3g})",
                      RuntimeWarning, stacklevel=3)
    if grid.box_length < spec.ell + 4 * d:
        raise ConstructionError(
            f"box {grid.box_length:g} cannot hold ell + 4D = {spec.ell + 4 * d:.3g}")


def displaced_pair(soliton, spec):
    """``(left, right)`` soliton copies; right is the exact mirror image of left."""
    _check_spec(soliton, spec)
    shift = np.zeros(soliton.grid.dim)
    shift[spec.axis] = -0.5 * spec.ell
    left = soliton.state.translated(shift)
    # Mirror instead of a second translation so the pair is exactly parity-related.
    right = _mirror_axis(left, spec.axis)
    return left, right


def _mirror_axis(psi, axis):
    return WaveFunction(psi.grid, psi.grid.reflect(psi.amplitudes, axis))


def build_cat(soliton, spec):
    """``(|L> + sign |R>) / sqrt(2 + 2 sign Re<L|R>)``, exactly normalized."""
    left, right = displaced_pair(soliton, spec)
    return cat_from_pair(left, right, spec.sign)


def cat_from_pair(left, right, sign):
    s = inner(left, right).real
    amps = (left.amplitudes + sign * right.amplitudes) / np.sqrt(2 + 2 * sign * s)
    return WaveFunction(left.grid, amps)


@dataclass(frozen=True, eq=False)
class ProjectorLR:
    """Projector onto span{L, R} held as a Lowdin-orthonormalized pair."""

    e_left: WaveFunction
    e_right: WaveFunction

    @classmethod
    def from_pair(cls, left, right):
        s = inner(left, right)
        overlap = np.array([[1.0, s], [np.conj(s), 1.0]])
        evals, evecs = np.linalg.eigh(overlap)
        if evals[0] < 1e-12:
            raise ConstructionError("left and right states are linearly dependent")
        inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.conj().T
        stacked = np.stack([left.amplitudes, right.amplitudes], axis=-1)
        ortho = stacked @ inv_sqrt
        grid = left.grid
        return cls(WaveFunction.normalized(grid, ortho[..., 0]),
                   WaveFunction.normalized(grid, ortho[..., 1]))

    @classmethod
    def for_soliton(cls, soliton, spec):
        return cls.from_pair(*displaced_pair(soliton, spec))

    def amplitude(self, psi):
        return inner(self.e_left, psi), inner(self.e_right, psi)

    def remainder(self, psi):
        """``(1 - P) psi`` as a raw amplitude array."""
        a, b = self.amplitude(psi)
        return psi.amplitudes - a * self.e_left.amplitudes - b * self.e_right.amplitudes


def measure_projector(proj, psi):
    """Probability of outcome 1 for the projector onto span{L, R}."""
    a, b = proj.amplitude(psi)
    return float(abs(a) ** 2 + abs(b) ** 2)


def born_weights(left, right):
    """Probabilities of the two sigma_x outcomes on the entangled qubit-soliton state.

    Conditional states are ``(L +- R)/norm`` with probability
    ``(1 +- Re<L|R>)/2``; these weights make the cat ensemble reproduce
    ``(|L><L| + |R><R|)/2`` exactly even when ``<L|R>`` is not zero.
    """
    s = inner(left, right).real
    return 0.5 * (1 + s), 0.5 * (1 - s)


def canonical_ensembles(soliton, spec):
    """``(E_LR, E_cat)``: the two decompositions of Bob's reduced state.

    ``E_LR = {(1/2, L), (1/2, R)}`` and ``E_cat = {(w+, Psi+), (w-, Psi-)}``
    with Born weights ``w+- = (1 +- Re<L|R>)/2``.
    """
    left, right = displaced_pair(soliton, spec)
    return ensembles_from_pair(left, right)


def ensembles_from_pair(left, right):
    w_plus, w_minus = born_weights(left, right)
    e_lr = PureEnsemble(((0.5, left), (0.5, right)))
    e_cat = PureEnsemble(((w_plus, cat_from_pair(left, right, +1)),
                          (w_minus, cat_from_pair(left, right, -1))))
    return e_lr, e_cat
