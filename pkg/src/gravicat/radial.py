"""Spherically symmetric Schrodinger-Newton ground state by shooting.

Independent of the grid solvers: integrates the radial ODE pair

    psi'' + 2 psi'/r = 2 (V - mu) psi
    V''   + 2 V'/r   = 4 pi psi^2

in units hbar = G = M = 1, bisecting on the central value of ``V - mu``
until the nodeless decaying solution is bracketed, then uses the scaling
symmetry ``psi -> lam^2 psi(lam r)`` to impose unit norm.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp, trapezoid


@dataclass(frozen=True)
class RadialSoliton:
    energy: float
    kinetic: float
    interaction: float
    mu: float
    fwhm: float
    rms_width: float
    r: np.ndarray
    psi: np.ndarray

    def scaled(self, params):
        """The same soliton in the units of ``params`` (any hbar, G, M)."""
        length = params.hbar**2 / (params.G * params.M**3)
        energy = params.G**2 * params.M**5 / params.hbar**2
        return RadialSoliton(
            energy=self.energy * energy, kinetic=self.kinetic * energy,
            interaction=self.interaction * energy, mu=self.mu * energy,
            fwhm=self.fwhm * length, rms_width=self.rms_width * length,
            r=self.r * length, psi=self.psi * length**-1.5)


def _rhs(r, y):
    psi, dpsi, w, dw = y
    return [dpsi, 2 * w * psi - 2 * dpsi / r, dw, 4 * np.pi * psi**2 - 2 * dw / r]


def _shoot(w0, r_max, r0=1e-6):
    # series start: psi = 1 + w0 r^2/3, W = w0 + 2 pi r^2/3
    y0 = [1 + w0 * r0**2 / 3, 2 * w0 * r0 / 3, w0 + 2 * np.pi * r0**2 / 3, 4 * np.pi * r0 / 3]

    def crossed(r, y):
        return y[0]
    crossed.terminal = True

    def blew_up(r, y):
        return y[1]
    blew_up.terminal = True
    blew_up.direction = 1

    sol = solve_ivp(_rhs, (r0, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-14,
                    events=(crossed, blew_up), dense_output=True)
    if sol.t_events[0].size:
        return -1, sol
    if sol.t_events[1].size:
        return 1, sol
    return 0, sol


def radial_soliton(r_max=40.0, iterations=80):
    """Ground state with unit norm in units hbar = G = M = 1."""
    lo, hi = -3.0, -1e-3
    if _shoot(lo, r_max)[0] != -1 or _shoot(hi, r_max)[0] != 1:
        raise RuntimeError("shooting bracket does not enclose the ground state")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        outcome, _ = _shoot(mid, r_max)
        if outcome == -1:
            lo = mid
        else:
            hi = mid
    # the last point before the solution peels away from the decaying branch
    _, sol_lo = _shoot(lo, r_max)
    _, sol_hi = _shoot(hi, r_max)
    r_end = min(sol_lo.t[-1], sol_hi.t[-1])
    r = np.linspace(1e-6, r_end, 20001)
    y_lo, y_hi = sol_lo.sol(r), sol_hi.sol(r)
    # stop where the two bracketing solutions separate
    split = np.abs(y_lo[0] - y_hi[0]) > 1e-6 * np.abs(y_lo[0]).max()
    cut = np.argmax(split) if split.any() else r.size
    # trim further to the region where psi is still monotonically decaying
    dpsi = 0.5 * (y_lo[1] + y_hi[1])[:cut]
    cut = min(cut, np.argmax(dpsi > 0) if (dpsi[1:] > 0).any() else cut)
    r = r[:cut]
    psi = 0.5 * (y_lo[0] + y_hi[0])[:cut]
    dpsi = 0.5 * (y_lo[1] + y_hi[1])[:cut]
    w = 0.5 * (y_lo[2] + y_hi[2])[:cut]

    shell = 4 * np.pi * r**2
    norm = trapezoid(shell * psi**2, r)
    # mu = V(r_end) - W(r_end), with V(r_end) ~ -norm / r_end outside the mass
    mu = -norm / r[-1] - w[-1]
    v = w + mu
    kinetic = 0.5 * trapezoid(shell * dpsi**2, r)
    interaction = 0.5 * trapezoid(shell * v * psi**2, r)
    r2 = trapezoid(shell * r**2 * psi**2, r)

    lam = 1.0 / norm
    half = psi**2 - 0.5
    r_half = np.interp(0.0, -half, r)  # psi(0) = 1 and psi^2 decreasing
    return RadialSoliton(
        energy=lam**3 * (kinetic + interaction), kinetic=lam**3 * kinetic,
        interaction=lam**3 * interaction, mu=lam**2 * mu,
        fwhm=2 * r_half / lam, rms_width=np.sqrt(r2 / norm) / lam,
        r=r / lam, psi=lam**2 * psi)
