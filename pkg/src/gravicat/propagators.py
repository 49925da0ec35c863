"""Real-time Strang split-step evolution and ground-state relaxation."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import (ConvergenceError, DivergenceError, ParameterError, ResolutionError,
                     SymmetryError)
from .field import Grid, WaveFunction, expectation_x, fftn, ifftn, inner, lobe_separation
from .potentials import StateDependentPotential

ENERGY_SLACK = 1e-13


def kinetic_multiplier(grid, params):
    return params.hbar**2 * grid.k_squared / (2 * params.M)


def kinetic_energy(amps, grid, params):
    spec = fftn(amps)
    n_total = amps.size
    return float(np.sum(kinetic_multiplier(grid, params) * np.abs(spec) ** 2)
                 * grid.cell_volume / n_total)


def energies(psi, params, potential):
    """Return ``(total, kinetic, interaction)`` energies of ``psi``."""
    kin = kinetic_energy(psi.amplitudes, psi.grid, params)
    pot = potential.interaction_energy(psi.density, psi.grid, params)
    return kin + pot, kin, pot


def apply_hamiltonian(amps, grid, params, values):
    """``H psi`` for a given potential array (the potential is not recomputed)."""
    return ifftn(kinetic_multiplier(grid, params) * fftn(amps)) + values * amps


def chemical_potential(psi, params, potential):
    values = potential.field(psi.density, psi.grid, params)
    h_psi = apply_hamiltonian(psi.amplitudes, psi.grid, params, values)
    mu = float(np.real(np.vdot(psi.amplitudes, h_psi)) * psi.grid.cell_volume)
    residual = np.sqrt(np.sum(np.abs(h_psi - mu * psi.amplitudes) ** 2) * psi.grid.cell_volume)
    return mu, float(residual)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    n_steps: int
    potential: StateDependentPotential
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.record_every < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")


class SplitStepper:
    """Second-order Strang stepper ``e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}``.

    The potential is a functional of the density, which the potential
    sub-step leaves unchanged, so the field computed after each kinetic
    sub-step serves both adjacent half steps.
    """

    def __init__(self, psi, params, potential, dt, time=0.0):
        self.grid = psi.grid
        self.params = params
        self.potential = potential
        self.dt = dt
        self.time = time
        self.steps_taken = 0
        self._amps = psi.amplitudes.copy()
        self._values = potential.field(np.abs(self._amps) ** 2, self.grid, params)
        self._kinetic_phase = np.exp(-1j * dt * kinetic_multiplier(self.grid, params) / params.hbar)

    def check_resolution(self):
        """Warn when ``dt`` does not resolve the fastest potential or kinetic phase."""
        hbar = self.params.hbar
        v_phase = self.dt * np.max(np.abs(self._values)) / hbar
        k_phase = self.dt * hbar * self.grid.k_max**2 / (2 * self.params.M)
        if v_phase > 0.1:
            warnings.warn(f"dt*max|V|/hbar = {v_phase:.3g} exceeds 0.1", RuntimeWarning,
                          stacklevel=3)
        if k_phase > 0.5:
            warnings.warn(f"dt*hbar*k_max^2/2M = {k_phase:.3g} exceeds 0.5", RuntimeWarning,
                          stacklevel=3)
        return v_phase, k_phase

    @property
    def amplitudes(self):
        return self._amps

    @property
    def potential_values(self):
        return self._values

    def state(self):
        return WaveFunction(self.grid, self._amps.copy())

    def step(self, n=1):
        half = -0.5j * self.dt / self.params.hbar
        amps = self._amps * np.exp(half * self._values)
        for i in range(n):
            amps = ifftn(self._kinetic_phase * fftn(amps))
            self._values = self.potential.field(np.abs(amps) ** 2, self.grid, self.params)
            # closing half kick of this step fused with the opening one of the next
            amps *= np.exp((half if i == n - 1 else 2 * half) * self._values)
        self._amps = amps
        self.steps_taken += n
        self.time += n * self.dt

    def is_finite(self):
        return bool(np.all(np.isfinite(self._amps)))


@dataclass
class EvolutionTrace:
    """Time series recorded during a real-time run."""

    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    energy_total: list = field(default_factory=list)
    energy_kinetic: list = field(default_factory=list)
    energy_potential: list = field(default_factory=list)
    centroids: list = field(default_factory=list)
    lobe_separations: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)
    reference_names: tuple = ()

    def record(self, time, amps, grid, params, potential, values, references=()):
        psi_density = np.abs(amps) ** 2
        kin = kinetic_energy(amps, grid, params)
        pot = potential.interaction_energy(psi_density, grid, params, values)
        norm = float(np.sum(psi_density) * grid.cell_volume)
        self.times.append(float(time))
        self.norms.append(norm)
        self.energy_kinetic.append(kin)
        self.energy_potential.append(pot)
        self.energy_total.append(kin + pot)
        # measurements below assume unit norm; divide out round-off
        state = WaveFunction(grid, amps / np.sqrt(norm))
        self.centroids.append(expectation_x(state))
        try:
            self.lobe_separations.append(lobe_separation(state))
        except SymmetryError:
            self.lobe_separations.append(float("nan"))
        self.overlaps.append([inner(ref, state) for ref in references])

    def __len__(self):
        return len(self.times)

    def as_arrays(self):
        return {
            "time": np.asarray(self.times),
            "norm": np.asarray(self.norms),
            "energy_total": np.asarray(self.energy_total),
            "energy_kinetic": np.asarray(self.energy_kinetic),
            "energy_potential": np.asarray(self.energy_potential),
            "centroid": np.asarray(self.centroids),
            "lobe_separation": np.asarray(self.lobe_separations),
            "overlap": np.asarray(self.overlaps, dtype=complex).reshape(len(self), -1),
        }

    def columns(self):
        """Column names and per-row values in CSV order."""
        arr = self.as_arrays()
        names = ["time", "norm", "energy_total", "energy_kinetic", "energy_potential"]
        cols = [arr[n] for n in names]
        dim = arr["centroid"].shape[1] if len(self) else 0
        for i, axis in zip(range(dim), "xyz"):
            names.append(f"centroid_{axis}")
            cols.append(arr["centroid"][:, i])
        names.append("lobe_separation")
        cols.append(arr["lobe_separation"])
        ref_names = self.reference_names or tuple(f"ref{i}" for i in range(arr["overlap"].shape[1]))
        for i, ref in enumerate(ref_names):
            ov = arr["overlap"][:, i]
            names += [f"overlap_{ref}_re", f"overlap_{ref}_im", f"overlap_{ref}_abs"]
            cols += [ov.real, ov.imag, np.abs(ov)]
        return names, cols

    def to_csv(self, path=None):
        """Write the trace as CSV with 17 significant digits; return the text."""
        names, cols = self.columns()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*cols):
            writer.writerow([format_float(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def format_float(value):
    return f"{float(value):.17g}"


def step_real(psi, params, cfg, references=(), reference_names=(), check=True):
    """Evolve ``psi`` by ``cfg.n_steps`` Strang steps, recording every ``cfg.record_every``.

    Returns the final state and an :class:`EvolutionTrace` whose first row is
    the initial state. Raises :class:`DivergenceError` (carrying the last
    finite snapshot) when a record interval produces non-finite amplitudes.
    """
    stepper = SplitStepper(psi, params, cfg.potential, cfg.dt)
    if check:
        stepper.check_resolution()
    trace = EvolutionTrace(reference_names=tuple(reference_names))
    trace.record(0.0, stepper.amplitudes, psi.grid, params, cfg.potential,
                 stepper.potential_values, references)
    last_good = psi
    done = 0
    while done < cfg.n_steps:
        chunk = min(cfg.record_every, cfg.n_steps - done)
        stepper.step(chunk)
        done += chunk
        if not stepper.is_finite():
            raise DivergenceError(f"non-finite amplitudes at t = {stepper.time:g}",
                                  last_good=last_good, time=last_good_time(trace))
        trace.record(stepper.time, stepper.amplitudes, psi.grid, params, cfg.potential,
                     stepper.potential_values, references)
        last_good = stepper.state()
    return stepper.state(), trace


def last_good_time(trace):
    return trace.times[-1] if trace.times else 0.0


@dataclass
class SolitonProfile:
    """Converged ground state and its summary numbers."""

    state: WaveFunction
    params: object
    potential: StateDependentPotential
    energy: float
    kinetic: float
    interaction: float
    mu: float
    residual: float
    rms_width: float
    fwhm: float
    iterations: int
    energy_history: list = field(default_factory=list, repr=False)

    @property
    def grid(self):
        return self.state.grid

    @property
    def virial_ratio(self):
        """``|2 E_kin + E_int| / |E_int|``, zero for an exact gravitational ground state."""
        return abs(2 * self.kinetic + self.interaction) / abs(self.interaction)


def rms_width(psi):
    centre = expectation_x(psi)
    r2 = sum((x - c) ** 2 for x, c in zip(psi.grid.coords(), centre))
    return float(np.sqrt(np.sum(r2 * psi.density) * psi.grid.cell_volume))


def density_line(psi, axis=0, upsample=16):
    """Density along the line through the box centre parallel to ``axis``.

    In 3D the field is shifted by half a cell across the line so the samples
    lie exactly on it. The line is Fourier-upsampled by ``upsample``.
    Returns ``(x, density)``.
    """
    grid = psi.grid
    if grid.dim == 1:
        line = psi.amplitudes
    else:
        shift = np.full(3, 0.5 * grid.spacing)
        shift[axis] = 0.0
        shifted = psi.translated(shift).amplitudes
        mid = grid.n_points // 2
        index = [mid, mid, mid]
        index[axis] = slice(None)
        line = shifted[tuple(index)]
    n = grid.n_points
    fine = scipy.signal.resample(line, n * upsample)
    h = grid.spacing / upsample
    # resample keeps sample 0 at the original x_0
    x = grid.axis[0] + h * np.arange(n * upsample)
    return x, np.abs(fine) ** 2


def fwhm(psi, axis=0):
    """Full width at half maximum of the density along a central line."""
    x, rho = density_line(psi, axis)
    peak = int(np.argmax(rho))
    half = 0.5 * rho[peak]
    left = peak
    while left > 0 and rho[left] > half:
        left -= 1
    right = peak
    while right < len(rho) - 1 and rho[right] > half:
        right += 1

    def crossing(i, j):
        return x[i] + (half - rho[i]) * (x[j] - x[i]) / (rho[j] - rho[i])

    return float(crossing(right - 1, right) - crossing(left, left + 1))


def _imaginary_split_step(amps, values, kin_decay, half, grid, potential, params):
    amps = amps * np.exp(half * values)
    amps = ifftn(kin_decay * fftn(amps))
    values = potential.field(np.abs(amps) ** 2, grid, params)
    amps = amps * np.exp(half * values)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2) * grid.cell_volume)
    return amps, potential.field(np.abs(amps) ** 2, grid, params)


class _Evaluation:
    """Energy, potential, ``H psi``, ``mu`` and residual at one normalized iterate."""

    def __init__(self, amps, grid, params, potential):
        self.amps = amps
        density = np.abs(amps) ** 2
        self.values = potential.field(density, grid, params)
        kin = kinetic_energy(amps, grid, params)
        self.interaction = potential.interaction_energy(density, grid, params, self.values)
        self.kinetic = kin
        self.energy = kin + self.interaction
        self.h_psi = apply_hamiltonian(amps, grid, params, self.values)
        dv = grid.cell_volume
        self.mu = float(np.real(np.vdot(amps, self.h_psi)) * dv)
        self.gradient = self.h_psi - self.mu * amps
        self.residual = float(np.sqrt(np.sum(np.abs(self.gradient) ** 2) * dv))


def relax_imaginary(psi0, params, potential, tol=1e-10, dtau=None, max_iter=5000,
                    switch_tol=1e-5):
    """Ground state by normalized gradient flow.

    Stage one is imaginary-time Strang splitting with renormalization after
    every step; ``dtau`` is halved and the step retried whenever the energy
    would rise. Once the relative energy change falls below ``switch_tol``
    the flow continues as a Fourier-preconditioned conjugate-gradient descent
    on the unit sphere, which has no splitting bias and so can drive the
    residual ``||H psi - mu psi||`` to zero. Converged when the relative
    energy change is below ``tol`` and the residual below ``100 * tol``.

    Every accepted iterate has energy no larger than its predecessor (up to
    round-off). Raises :class:`ConvergenceError` after ``max_iter`` iterations.
    """
    grid = psi0.grid
    hbar = params.hbar
    dv = grid.cell_volume
    kin = kinetic_multiplier(grid, params)
    if dtau is None:
        values0 = potential.field(psi0.density, grid, params)
        scale = max(np.max(np.abs(values0)), kinetic_energy(psi0.amplitudes, grid, params))
        dtau = 0.5 * hbar / scale
    amps = psi0.amplitudes / np.sqrt(psi0.norm())
    current = _Evaluation(amps, grid, params, potential)
    history = [current.energy]
    iterations = 0

    def converged(prev_energy, ev):
        rel = abs(ev.energy - prev_energy) / max(abs(ev.energy), 1e-300)
        return rel < tol and ev.residual < 100 * tol

    # stage one: imaginary-time splitting
    while iterations < max_iter:
        kin_decay = np.exp(-dtau * kin / hbar)
        trial_amps, _ = _imaginary_split_step(current.amps, current.values, kin_decay,
                                              -0.5 * dtau / hbar, grid, potential, params)
        trial = _Evaluation(trial_amps, grid, params, potential)
        iterations += 1
        if trial.energy > current.energy + ENERGY_SLACK * abs(current.energy):
            dtau *= 0.5
            continue
        rel = abs(trial.energy - current.energy) / max(abs(trial.energy), 1e-300)
        current = trial
        history.append(current.energy)
        if rel < switch_tol:
            break

    # stage two: preconditioned nonlinear CG on the sphere
    shift = max(current.kinetic, abs(current.mu), 1e-300)
    precond = 1.0 / (kin + shift)
    direction = None
    prev_grad = prev_pgrad = None
    step = 1.0
    prev_energy = history[-2] if len(history) > 1 else np.inf
    stalled = 0
    while iterations < max_iter:
        if converged(prev_energy, current):
            break
        amps = current.amps
        pgrad = ifftn(precond * fftn(current.gradient))
        pgrad -= np.vdot(amps, pgrad) * dv * amps
        if direction is None or prev_grad is None:
            beta = 0.0
        else:
            num = np.real(np.vdot(current.gradient - prev_grad, pgrad))
            den = np.real(np.vdot(prev_grad, prev_pgrad))
            beta = max(0.0, num / den) if den > 0 else 0.0
        new_dir = -pgrad
        if beta > 0:
            carried = direction - np.vdot(amps, direction) * dv * amps
            new_dir = new_dir + beta * carried
        slope = 2 * np.real(np.vdot(current.gradient, new_dir)) * dv
        if slope >= 0:
            new_dir = -pgrad
            slope = 2 * np.real(np.vdot(current.gradient, new_dir)) * dv
        if slope >= 0:
            # gradient below round-off: nothing left to descend
            break

        def point(tau):
            raw = amps + tau * new_dir
            return raw / np.sqrt(np.sum(np.abs(raw) ** 2) * dv)

        def slope_at(ev, tau):
            raw = amps + tau * new_dir
            nrm2 = np.sum(np.abs(raw) ** 2) * dv
            tangent = (new_dir - np.real(np.vdot(raw, new_dir)) * dv / nrm2 * raw) / np.sqrt(nrm2)
            return 2 * np.real(np.vdot(ev.h_psi, tangent)) * dv

        accepted = None
        for _ in range(40):
            trial = _Evaluation(point(step), grid, params, potential)
            iterations += 1
            trial_slope = slope_at(trial, step)
            candidates = [(trial.energy, step, trial)]
            if trial_slope > slope:
                tau_star = step * slope / (slope - trial_slope)
                if 0 < tau_star < 50 * step and abs(tau_star - step) > 1e-3 * step:
                    other = _Evaluation(point(tau_star), grid, params, potential)
                    iterations += 1
                    candidates.append((other.energy, tau_star, other))
            energy, tau, ev = min(candidates, key=lambda c: c[0])
            if energy <= current.energy + ENERGY_SLACK * abs(current.energy):
                accepted = (tau, ev)
                break
            step *= 0.5
        if accepted is None:
            stalled += 1
            direction = None
            if stalled > 3:
                break
            continue
        stalled = 0
        tau, ev = accepted
        step = min(max(tau, 1e-6), 1e6)
        prev_grad, prev_pgrad = current.gradient, pgrad
        direction = new_dir
        prev_energy = current.energy
        current = ev
        history.append(current.energy)

    state = WaveFunction.normalized(grid, current.amps)
    profile = SolitonProfile(
        state=state, params=params, potential=potential, energy=current.energy,
        kinetic=current.kinetic, interaction=current.interaction, mu=current.mu,
        residual=current.residual, rms_width=rms_width(state), fwhm=fwhm(state),
        iterations=iterations, energy_history=history)
    if not converged(prev_energy, current):
        raise ConvergenceError(
            f"relaxation stopped after {iterations} iterations with residual "
            f"{current.residual:.3g}",
            best=profile, residual=current.residual)
    return profile


RESOLUTION_TOLERANCE = 1e-8


def resample(psi, target):
    """Trigonometric interpolation of ``psi`` onto ``target`` (same dimension).

    Raises :class:`ResolutionError` when more than ``RESOLUTION_TOLERANCE`` of
    the probability lies outside the target box or in source wavenumbers
    the target grid cannot represent.
    """
    source = psi.grid
    if target.dim != source.dim:
        raise ResolutionError("cannot resample across dimensions")
    half = 0.5 * target.box_length
    outside = sum(np.abs(x) > half for x in source.coords())
    lost = float(np.sum(psi.density * (outside > 0)) * source.cell_volume)
    if lost > RESOLUTION_TOLERANCE:
        raise ResolutionError(f"{lost:.3g} of the probability lies outside the target box")
    k_cut = np.pi / target.spacing
    spectrum = np.abs(fftn(psi.amplitudes)) ** 2
    beyond = sum(np.abs(k) >= k_cut for k in source.k_vectors()) > 0
    aliased = float(np.sum(spectrum * beyond) / np.sum(spectrum))
    if aliased > RESOLUTION_TOLERANCE:
        raise ResolutionError(
            f"{aliased:.3g} of the spectral weight is beyond the target cutoff {k_cut:.3g}")
    n = source.n_points
    k = source.wavenumbers
    x0 = source.axis[0]
    xt = target.axis
    # F^{-1} evaluated at arbitrary points, composed with the forward DFT
    evaluation = np.exp(1j * np.outer(xt - x0, k)) / n
    inside = np.abs(xt) <= 0.5 * source.box_length
    evaluation[~inside] = 0.0
    # the Nyquist mode is ambiguous in sign; use its real (cosine) part
    evaluation[:, n // 2] = np.cos(np.pi / source.spacing * (xt - x0)) * inside / n
    mix = evaluation @ np.fft.fft(np.eye(n), axis=0)
    out = psi.amplitudes
    for ax in range(source.dim):
        out = np.moveaxis(np.tensordot(mix, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return WaveFunction.normalized(target, out)


def pad_box(psi, factor=2):
    """Embed ``psi`` at the same spacing in a box ``factor`` times wider (exact)."""
    g = psi.grid
    target = Grid(g.dim, factor * g.n_points, factor * g.box_length)
    offset = (factor - 1) * g.n_points // 2
    out = np.zeros(target.shape, dtype=complex)
    out[(slice(offset, offset + g.n_points),) * g.dim] = psi.amplitudes
    return WaveFunction(target, out)


def rescale_solution(psi, params, M_new, grid=None):
    """Map a solution at mass ``params.M`` to one at ``M_new``.

    Uses the exact scaling covariance of the Schrodinger-Newton equation:
    lengths scale by ``(M/M_new)^3`` and times by ``(M/M_new)^5``. The state is
    returned on the correspondingly scaled grid, or resampled onto ``grid``
    when given. Returns ``(state, params_new)``.
    """
    if params.unit_system != "dimensionless":
        raise ParameterError("rescale_solution expects dimensionless-mode parameters")
    if not M_new > 0:
        raise ParameterError(f"M_new must be positive, got {M_new}")
    s = (params.M / M_new) ** 3
    scaled_grid = Grid(psi.grid.dim, psi.grid.n_points, psi.grid.box_length * s)
    scaled = WaveFunction.normalized(scaled_grid, psi.amplitudes * s ** (-psi.grid.dim / 2))
    if grid is not None:
        scaled = resample(scaled, grid)
    return scaled, params.with_mass(M_new)
