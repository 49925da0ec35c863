import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gravicat.errors import ConstructionError
from gravicat.experiments import planck_mass, superluminal_threshold
from gravicat.field import Grid, Params, PureEnsemble, WaveFunction, density_matrix_gram, inner
from gravicat.potentials import NoPotential
from gravicat.propagators import SplitStepper
from gravicat.states import ProjectorLR, measure_projector

GRID = Grid(1, 32, 8.0)
seeds = st.integers(0, 2**32 - 1)


def random_state(seed, grid=GRID):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return WaveFunction.normalized(grid, amps)


def random_ensemble(seed, k):
    rng = np.random.default_rng(seed)
    weights = rng.random(k) + 0.05
    weights /= weights.sum()
    return PureEnsemble(tuple((float(w), random_state(int(s)))
                              for w, s in zip(weights, rng.integers(0, 2**31, k))))


def dense_trace_distance(e1, e2):
    dv = GRID.cell_volume
    rho = sum(w * np.outer(s.amplitudes, s.amplitudes.conj()) * dv for w, s in e1.members) - \
        sum(w * np.outer(s.amplitudes, s.amplitudes.conj()) * dv for w, s in e2.members)
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho)))


@given(seeds, seeds, seeds, st.complex_numbers(max_magnitude=5, allow_nan=False),
       st.complex_numbers(max_magnitude=5, allow_nan=False))
def test_inner_is_sesquilinear_and_bounded(sa, sb, sc, alpha, beta):
    a, b, c = random_state(sa), random_state(sb), random_state(sc)
    combo = WaveFunction.normalized(GRID, alpha * b.amplitudes + beta * c.amplitudes) \
        if abs(alpha) + abs(beta) > 1e-3 else None
    assert abs(inner(a, b)) <= 1 + 1e-12
    assert inner(a, b) == pytest.approx(np.conj(inner(b, a)), abs=1e-14)
    if combo is not None:
        raw = alpha * b.amplitudes + beta * c.amplitudes
        scale = np.sqrt(np.sum(np.abs(raw) ** 2) * GRID.cell_volume)
        if scale > 1e-6:
            assert inner(a, combo) * scale == pytest.approx(
                alpha * inner(a, b) + beta * inner(a, c), abs=1e-10)


@settings(max_examples=40)
@given(seeds, seeds, seeds, st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_trace_distance_is_a_metric(s1, s2, s3, k1, k2, k3):
    e1, e2, e3 = random_ensemble(s1, k1), random_ensemble(s2, k2), random_ensemble(s3, k3)
    d12 = density_matrix_gram(e1, e2)
    assert d12 == pytest.approx(density_matrix_gram(e2, e1), abs=1e-12)
    assert 0 <= d12 <= 1 + 1e-12
    assert d12 <= density_matrix_gram(e1, e3) + density_matrix_gram(e3, e2) + 1e-10
    assert density_matrix_gram(e1, e1) < 1e-10
    assert d12 == pytest.approx(dense_trace_distance(e1, e2), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(1e-3, 0.2), st.integers(1, 40))
def test_free_evolution_preserves_norm(seed, dt, steps):
    stepper = SplitStepper(random_state(seed), Params(), NoPotential(), dt)
    stepper.step(steps)
    assert stepper.state().norm() == pytest.approx(1.0, abs=1e-12)


def test_identical_pair_is_rejected():
    psi = random_state(0)
    with pytest.raises(ConstructionError):
        ProjectorLR.from_pair(psi, psi)


@given(seeds, seeds)
def test_lowdin_pair_is_orthonormal_and_symmetric(sa, sb):
    assume(sa != sb)  # identical inputs span one dimension
    left, right = random_state(sa), random_state(sb)
    proj = ProjectorLR.from_pair(left, right)
    e = (proj.e_left, proj.e_right)
    gram = np.array([[inner(x, y) for y in e] for x in e])
    assert np.allclose(gram, np.eye(2), atol=1e-10)
    # symmetric orthogonalization treats both inputs alike
    assert inner(left, proj.e_left).real == pytest.approx(inner(right, proj.e_right).real,
                                                          abs=1e-10)
    assert measure_projector(proj, left) == pytest.approx(1.0, abs=1e-10)


@given(seeds, seeds, seeds)
def test_projector_outcome_plus_remainder_is_one(sa, sb, sp):
    assume(sa != sb)
    proj = ProjectorLR.from_pair(random_state(sa), random_state(sb))
    psi = random_state(sp)
    p = measure_projector(proj, psi)
    rest = np.sum(np.abs(proj.remainder(psi)) ** 2) * GRID.cell_volume
    assert 0 <= p <= 1 + 1e-9
    assert p + rest == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=20)
@given(st.lists(st.tuples(st.floats(-10, -5), st.floats(-9, 3)), min_size=20, max_size=20))
def test_planck_identity_over_random_mass_and_distance(pairs):
    m_p = planck_mass()
    for log_m, log_ell in pairs:
        M, ell = 10.0**log_m, 10.0**log_ell
        assert superluminal_threshold(Params.si(M=M), ell).ratio == pytest.approx(
            (m_p / M) ** 2, rel=1e-12)
