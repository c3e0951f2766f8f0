"""Second-order mode spectrum about the stable growth solution.

Dividing each field by its leading-order growth factor turns the model into
an autonomous system whose fixed point is the leading-order coefficient
vector. Eigenvalues ``sigma`` of its Jacobian give the correction exponents
``nu = sigma + mu0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .integrator import Trajectory
from .leading import RegimeClass, classify, leading_equilibrium, solve_amplitudes
from .model import ModelParams, rhs

ZERO_MODE_TOL = 1e-6
FD_REL_STEP = 1e-6
RICHARDSON_TOL = 1e-8
FIXED_POINT_TOL = 1e-10
FIT_COND_MAX = 1e10


def scaling_rates(p: ModelParams, mu0: float) -> np.ndarray:
    """Exponential rate removed from each of the eight fields."""
    m = mu0
    return np.array([m, m, m, m, m - p.beta, m - p.beta - p.alpha, p.alpha + p.beta, 0.0])


def _check(p: ModelParams, mu0):
    if not p.is_exponential:
        raise ValueError("modal analysis requires exponential growth")
    if np.iscomplexobj(mu0) and np.imag(mu0) != 0:
        raise ValueError("modal analysis is restricted to a real dominant root")
    return float(np.real(mu0))


def rescaled_rhs(u, p: ModelParams, mu0: float) -> np.ndarray:
    """Autonomous vector field for the rescaled state ``u``.

    The wage and productivity factors cancel exactly, so the original
    right-hand side is evaluated at ``t = 0`` (productivity ``a0``) with the
    decaying accounting constant dropped.
    """
    mu0 = _check(p, mu0)
    u = np.asarray(u, dtype=float)
    return rhs(0.0, u, p, 0.0) - scaling_rates(p, mu0) * u


def fixed_point(p: ModelParams, mu0: float, kr0: float = 1.0) -> np.ndarray:
    """Leading-order coefficients as a rescaled state with ``B_C0 = 1``."""
    eq = leading_equilibrium(p)
    tab = solve_amplitudes(mu0, p, eq)
    c = {k: z.real for k, z in tab.coefficients.items()}
    return np.array([1.0, c["B_PL"], c["F_L"], c["F_D"], c["W"] / kr0, c["P_C"] / kr0,
                     kr0, eq.lambda0])


def _fd_jacobian(f, u, step_scale):
    n = u.size
    J = np.empty((n, n))
    for i in range(n):
        h = step_scale * max(abs(u[i]), 1.0)
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (f(u + e) - f(u - e)) / (2 * h)
    return J


def jacobian(p: ModelParams, mu0: float, u0=None) -> np.ndarray:
    """Central-difference Jacobian of :func:`rescaled_rhs`, checked by Richardson extrapolation."""
    mu0 = _check(p, mu0)
    u0 = fixed_point(p, mu0) if u0 is None else np.asarray(u0, dtype=float)

    def f(u):
        return rescaled_rhs(u, p, mu0)

    J1 = _fd_jacobian(f, u0, FD_REL_STEP)
    J2 = _fd_jacobian(f, u0, FD_REL_STEP / 2)
    JR = (4 * J2 - J1) / 3
    err = np.max(np.abs(JR - J1)) / max(1.0, np.max(np.abs(JR)))
    if not err < RICHARDSON_TOL:
        raise ArithmeticError(f"finite-difference Jacobian not converged (Richardson gap {err:.3g})")
    if not np.all(np.isfinite(J1)):
        raise ArithmeticError("non-finite Jacobian entries")
    return J1


@dataclass(frozen=True)
class ModeSpectrum:
    mu0: float
    sigma: np.ndarray
    nu: np.ndarray
    zero_modes: int
    spontaneous_pair: complex
    moderation_period: float
    relative_decay: float

    @property
    def nu1(self) -> float:
        """Largest real exponent other than the zero modes."""
        nz = np.abs(self.sigma) >= ZERO_MODE_TOL
        real = nz & (self.nu.imag == 0)
        return float(self.nu[real].real.max())

    def to_dict(self) -> dict:
        cx = lambda z: {"re": float(z.real), "im": float(z.imag)}
        return {"mu0": self.mu0, "sigma": [cx(z) for z in self.sigma], "nu": [cx(z) for z in self.nu],
                "zero_modes": self.zero_modes, "moderation_period": self.moderation_period,
                "relative_decay": self.relative_decay}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def mode_spectrum(p: ModelParams, kr0: float = 1.0) -> ModeSpectrum:
    """Correction exponents about the stable growth fixed point."""
    mode = classify(p)
    if mode.regime is not RegimeClass.STABLE_GROWTH:
        raise ValueError(f"mode spectrum needs stable growth, got {mode.regime.value}")
    mu0 = mode.mu0.real
    u0 = fixed_point(p, mu0, kr0)
    res = np.max(np.abs(rescaled_rhs(u0, p, mu0))) / max(1.0, np.max(np.abs(u0)))
    if not res < FIXED_POINT_TOL:
        raise ArithmeticError(f"fixed point residual {res:.3g} too large")
    sigma = np.linalg.eigvals(jacobian(p, mu0, u0))
    sigma = np.where(np.abs(sigma.imag) < 1e-12 * np.maximum(1.0, np.abs(sigma)), sigma.real + 0j, sigma)
    sigma = sigma[np.lexsort((sigma.imag, sigma.real))]
    nu = sigma + mu0
    pair = nu[np.argmax(np.abs(nu.imag))]
    pair = complex(pair.real, abs(pair.imag))
    period = 2 * math.pi / pair.imag if pair.imag else math.inf
    return ModeSpectrum(mu0=mu0, sigma=sigma, nu=nu,
                        zero_modes=int(np.sum(np.abs(sigma) < ZERO_MODE_TOL)),
                        spontaneous_pair=pair, moderation_period=period,
                        relative_decay=pair.real - mu0)


@dataclass(frozen=True)
class TransientFit:
    """``pi_r - pi_r0 ~ pi_r1 e^{(nu1-mu0)t} + |pi_r2| e^{(Re nu2-mu0)t} sin(Im nu2 t + phase)``."""

    pi_r1: float
    pi_r2_mod: float
    pi_r2_phase: float
    window: tuple[float, float]
    rms_residual: float
    kr1: float | None = None


def transient_basis(t, mu0: float, nu1: float, nu2: complex) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    d2 = np.exp((nu2.real - mu0) * t)
    return np.column_stack([np.exp((nu1 - mu0) * t), d2 * np.cos(nu2.imag * t),
                            d2 * np.sin(nu2.imag * t)])


def fit_transient_series(t, y, mu0: float, nu1: float, nu2: complex, *, with_constant=False):
    """Least-squares coefficients of the transient model for the series ``y``.

    The model is linear in ``(pi_r1, m sin(phase), m cos(phase))`` so the fit
    is solved directly; columns are normalized before the condition check.
    """
    X = transient_basis(t, mu0, nu1, nu2)
    if with_constant:
        X = np.column_stack([np.ones(len(t)), X])
    norms = np.linalg.norm(X, axis=0)
    Xs = X / norms
    cond = np.linalg.cond(Xs)
    if not cond < FIT_COND_MAX:
        raise ArithmeticError(f"ill-conditioned transient fit (condition {cond:.3g}); try a wider window")
    coef, *_ = np.linalg.lstsq(Xs, np.asarray(y, dtype=float), rcond=None)
    coef = coef / norms
    rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return coef, rms


def fit_transients(traj: Trajectory, mu0: float, spectrum: ModeSpectrum,
                   window: tuple[float, float] = (20.0, 60.0)) -> TransientFit:
    """Fit the two leading transient constants of the profit rate over ``window``."""
    p = traj.params
    t0, t1 = window
    m = (traj.times >= t0) & (traj.times <= t1)
    if m.sum() < 4:
        raise ValueError("fit window contains too few samples")
    t = traj.times[m]
    pi0 = leading_equilibrium(p).pi_r0
    nu1, nu2 = spectrum.nu1, spectrum.spontaneous_pair
    coef, rms = fit_transient_series(t, traj["pi_r"][m] - pi0, mu0, nu1, nu2)
    p1, c, s_ = coef
    # m*cos(w t) * sin(phase) + m*sin(w t) * cos(phase)
    mod = math.hypot(c, s_)
    phase = math.atan2(c, s_)
    # K_r transient relative to its own leading exponential
    lk = np.log(traj["K_r"][m]) - (p.alpha + p.beta) * t
    kc, _ = fit_transient_series(t, lk, mu0, nu1, nu2, with_constant=True)
    return TransientFit(pi_r1=float(p1), pi_r2_mod=mod, pi_r2_phase=phase, window=(t0, t1),
                        rms_residual=rms, kr1=float(kc[1]))


def kr_structure_factor(p: ModelParams, nu1: float, mu0: float) -> float:
    """Predicted ratio of the ``K_r`` transient amplitude to ``pi_r1``."""
    pi0 = leading_equilibrium(p).pi_r0
    return p.g_inv.derivative(pi0) / p.v / (nu1 - mu0)
