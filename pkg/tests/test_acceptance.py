"""Acceptance criteria 1-10.

Each test prints one ``CRITERION n: PASS|FAIL`` line (visible with ``-v`` or
``-s``) listing the measured numbers, then asserts the verdict. Criteria 1-2
run the 3D soliton on 64^3; the cat criteria run on the 1D surrogate of
``configs/surrogate.ini``.
"""

import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from gravicat import cli
from gravicat.config import parse_config
from gravicat.experiments import (run_janossy, run_mixing_witness, run_planck, run_scaling_suite,
                                  run_soliton, run_telegraph, JanossyConfig)
from gravicat.field import Grid, Params, PureEnsemble, WaveFunction, density_matrix_gram, inner
from gravicat.potentials import LATTICE_SELF_TERM, NoPotential, newton_field
from gravicat.propagators import SplitStepper
from gravicat.states import CatSpec, build_cat

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SCALING_ELLS = (6.0, 8.0, 10.0, 14.0)
# artifact-derived orthogonalization-time prefactor on the surrogate (regression pin)
DELTA_T_PREFACTOR = 3.151


def config(name, subcommand):
    return parse_config(subcommand, (CONFIGS / name).read_text(), origin=name)


def verdict(number, checks, capsys):
    """Print one line for the criterion and fail the test on any failed sub-check."""
    ok = all(passed for _, passed in checks)
    detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def soliton3d():
    cfg = cli.soliton_config(config("soliton3d.ini", "soliton"))
    start = time.perf_counter()
    rep = run_soliton(cfg)
    return rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def scaling(surrogate):
    _, _, _, sol = surrogate
    cfg = cli.scaling_config(config("surrogate.ini", "scaling"))
    assert tuple(cfg.ells) == SCALING_ELLS
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_scaling_suite(cfg, sol)


def test_criterion_01_soliton_statics(soliton3d, capsys):
    rep, wall = soliton3d
    verdict(1, [
        (f"residual {rep['residual']:.2e} < 1e-8", rep["residual"] < 1e-8),
        (f"min fidelity over t=10 {rep['min_fidelity']:.6f} >= 0.999",
         rep["min_fidelity"] >= 0.999),
        (f"wall time {wall:.0f} s < 600 s", wall < 600),
    ], capsys)


def test_criterion_02_virial_and_oracle(soliton3d, capsys):
    rep, _ = soliton3d
    verdict(2, [
        (f"virial |2K+W|/|W| {rep['virial_ratio']:.2e} <= 1e-3", rep["virial_ratio"] <= 1e-3),
        (f"energy {rep['energy']:.6f} vs radial oracle {rep['energy_oracle']:.6f}: "
         f"{rep['energy_vs_oracle']:.2e} <= 1e-2", rep["energy_vs_oracle"] <= 1e-2),
    ], capsys)


def test_criterion_03_cat_oscillation(scaling, capsys):
    rep = scaling
    fit = next(f for f in rep.fits if f.name == "period_vs_ell")
    checks = [(f"lobe separation at ell=10 periodic: second merger "
               f"{rep['second_merger_ell_10']:.4g}", rep["periodic_ell_10"] >= 1),
              (f"T-vs-ell slope {fit.exponent:.3f} in 1.5 +- 0.15",
               abs(fit.exponent - 1.5) <= 0.15)]
    for ell in SCALING_ELLS:
        ratio = rep[f"period_over_formula_ell_{ell:g}"]
        checks.append((f"T/T_formula(ell={ell:g}) {ratio:.4f} within x2", 0.5 <= ratio <= 2.0))
    verdict(3, checks, capsys)


def test_criterion_04_orthogonalization_time(scaling, capsys):
    rep = scaling
    fit = next(f for f in rep.fits if f.name == "delta_t_vs_ell")
    checks = [(f"dt-vs-ell slope {fit.exponent:.3f} in 1.0 +- 0.15",
               abs(fit.exponent - 1.0) <= 0.15)]
    for ell in SCALING_ELLS:
        ratio = rep[f"delta_t_over_period_ell_{ell:g}"]
        checks.append((f"dt/T(ell={ell:g}) {ratio:.3f} < 0.3", ratio < 0.3))
    for ell in SCALING_ELLS:
        c = rep[f"delta_t_prefactor_ell_{ell:g}"]
        checks.append((f"dt/(hbar ell/GM^2)(ell={ell:g}) {c:.3f} within x3", 1 / 3 <= c <= 3))
    mean = rep["delta_t_prefactor_mean"]
    checks.append((f"prefactor {mean:.4f} matches pinned {DELTA_T_PREFACTOR}",
                   abs(mean / DELTA_T_PREFACTOR - 1) <= 0.02))
    verdict(4, checks, capsys)


def test_criterion_05_telegraph(surrogate_cat, capsys):
    cfg, sol, traj, ctrl = surrogate_cat
    rep = run_telegraph(cfg, sol, trajectories=traj, control=ctrl)
    verdict(5, [
        (f"P(1|i) at 3dt {rep['p1_case_i_at_3dt']:.6f} >= 0.99", rep["p1_case_i_at_3dt"] >= 0.99),
        (f"P(1|ii) at 3dt {rep['p1_case_ii_at_3dt']:.4f} <= 0.1", rep["p1_case_ii_at_3dt"] <= 0.1),
        (f"G=0 distinguishability {rep['control_max_distinguishability']:.1e} <= 1e-3",
         rep["control_max_distinguishability"] <= 1e-3),
    ], capsys)


def test_criterion_06_planck_threshold(capsys):
    rep = run_planck(Params.si(M=50e-9), n_random=20, seed=0)
    m_p = rep["planck_mass"]
    worst = rep["identity_max_relative_error"]
    verdict(6, [
        (f"m_P {m_p:.6e} kg within 0.1% of 2.176e-8", abs(m_p / 2.176e-8 - 1) <= 1e-3),
        (f"c dt/ell = (m_P/M)^2 over 20 random pairs: worst {worst:.1e} <= 1e-12",
         worst <= 1e-12 and rep.inputs["n_random"] == 20),
    ], capsys)


def test_criterion_07_mixing_witness(surrogate_cat, capsys):
    cfg, sol, traj, ctrl = surrogate_cat
    rep = run_mixing_witness(cfg, sol, trajectories=traj, control=ctrl)
    bound = abs(traj.initial_overlap_lr) + 1e-6
    verdict(7, [
        (f"trace distance at 3dt {rep['distance_at_3dt']:.4f} >= 0.3",
         rep["distance_at_3dt"] >= 0.3),
        (f"G=0 max distance {rep['control_max_distance']:.1e} <= 1e-6",
         rep["control_max_distance"] <= 1e-6),
        (f"initial distance {rep['initial_distance']:.1e} <= |<L|R>| + 1e-6 = {bound:.1e}",
         rep["initial_distance"] <= bound),
    ], capsys)


def test_criterion_08_janossy(capsys):
    rep = run_janossy(JanossyConfig(Params.dimensionless(M=1.5, alpha=0.8), Grid(1, 256, 40.0)))
    verdict(8, [
        (f"relaxed state L2 error {rep['relaxed_l2_error']:.1e} <= 1e-4",
         rep["relaxed_l2_error"] <= 1e-4),
        (f"alpha=0 free width error {rep['free_width_relative_error']:.1e} <= 5e-3",
         rep["free_width_relative_error"] <= 5e-3),
    ], capsys)


def _direct_sum_3d(rho, grid):
    pts = np.stack([np.ravel(np.broadcast_to(x, grid.shape)) for x in grid.coords()], axis=1)
    r = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        kernel = 1.0 / r
    np.fill_diagonal(kernel, LATTICE_SELF_TERM / grid.spacing)
    return (-grid.cell_volume * kernel @ rho.ravel()).reshape(grid.shape)


def _dense_distance(e1, e2):
    dv = e1.grid.cell_volume
    rho = sum(w * np.outer(s.amplitudes, s.amplitudes.conj()) * dv for w, s in e1.members)
    rho = rho - sum(w * np.outer(s.amplitudes, s.amplitudes.conj()) * dv for w, s in e2.members)
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho)))


def test_criterion_09_numerics(soft_soliton, surrogate_cat, capsys):
    checks = []
    # norm conservation under the SNE
    norms = np.asarray(surrogate_cat[2].trace_plus.norms)
    err = np.max(np.abs(norms - 1))
    checks.append((f"SNE norm error {err:.1e} <= 1e-9", err <= 1e-9))
    # Strang self-convergence
    sol = soft_soliton
    cat = build_cat(sol, CatSpec(14.0))

    def evolve(dt):
        stepper = SplitStepper(cat, sol.params, sol.potential, dt)
        stepper.step(int(round(2.0 / dt)))
        return stepper.amplitudes

    ref = evolve(0.0025)
    errs = [np.sqrt(np.sum(np.abs(evolve(dt) - ref) ** 2) * cat.grid.cell_volume)
            for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    checks.append((f"Strang orders {np.round(orders, 3).tolist()} ~ 2",
                   bool(np.all(np.abs(orders - 2) < 0.2))))
    # spectral potential against the direct sum
    g3 = Grid(3, 16, 8.0)
    rho = np.random.default_rng(0).random(g3.shape)
    ref3 = _direct_sum_3d(rho, g3)
    rel = np.max(np.abs(newton_field(rho, g3, 1.0, 1.0) - ref3)) / np.max(np.abs(ref3))
    checks.append((f"spectral vs direct 16^3 {rel:.1e} <= 1e-6", rel <= 1e-6))
    # pairwise overlaps under the linear stepper
    g1 = Grid(1, 256, 40.0)
    a = WaveFunction.gaussian(g1, 0.8, center=-4.0, momentum=1.0)
    b = WaveFunction.gaussian(g1, 1.5, center=3.0, momentum=-0.5)
    s0 = abs(inner(a, b))
    sa, sb = (SplitStepper(s, Params(), NoPotential(), 0.01) for s in (a, b))
    drift = 0.0
    for _ in range(20):
        sa.step(25)
        sb.step(25)
        drift = max(drift, abs(abs(inner(sa.state(), sb.state())) - s0))
    checks.append((f"G=0 overlap drift {drift:.1e} <= 1e-9", drift <= 1e-9))
    # Gram-matrix trace distance against dense diagonalization
    g64 = Grid(1, 64, 8.0)
    rng = np.random.default_rng(5)

    def ensemble(k):
        w = rng.random(k) + 0.1
        w /= w.sum()
        states = [WaveFunction.normalized(g64, rng.normal(size=64) + 1j * rng.normal(size=64))
                  for _ in range(k)]
        return PureEnsemble(tuple(zip(w.tolist(), states)))

    worst = max(abs(density_matrix_gram(e1, e2) - _dense_distance(e1, e2))
                for e1, e2 in ((ensemble(2), ensemble(2)), (ensemble(3), ensemble(4)),
                               (ensemble(1), ensemble(4))))
    checks.append((f"Gram vs dense trace distance {worst:.1e} <= 1e-8", worst <= 1e-8))
    verdict(9, checks, capsys)


def test_criterion_10_determinism(tmp_path, capsys):
    argv = ["telegraph", "--n-points", "256", "--box-length", "64", "--ell", "14",
            "--dt", "0.01", "--seed", "11", "--gnuplot"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name in ("first", "second"):
            cli.main(argv + ["-o", str(tmp_path / name)])
    capsys.readouterr()
    csvs = sorted(p.name for p in (tmp_path / "first").glob("*.csv"))
    same = [(tmp_path / "first" / n).read_bytes() == (tmp_path / "second" / n).read_bytes()
            for n in csvs]
    verdict(10, [(f"{len(csvs)} CSV files byte-identical across two runs",
                  len(csvs) >= 2 and all(same))], capsys)
