"""Leading-order exponential asymptotics of the growth phase.

Each nominal field grows like ``X0 * exp(mu t)`` (prices and wages with the
appropriate drift), the employment rate and the profit rate settle to
constants. Substituting this ansatz produces six linear equations in five
unknown scale coefficients; their consistency condition is a quintic in ``mu``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import ModelParams

AMP_FIELDS = ("B_PL", "F_L", "F_D", "W", "P_C", "W_D")
BORDER_TOL = 1e-9
QUINTIC_RESIDUAL_TOL = 1e-8
ROOT_RESIDUAL_TOL = 1e-12
DROPPED_ROW_TOL = 1e-8


class NonviableParameters(ValueError):
    """No leading-order equilibrium exists for these parameters."""


def _require_exponential(p: ModelParams):
    if not p.is_exponential:
        raise ValueError("leading-order asymptotics require exponential growth")


@dataclass(frozen=True)
class Equilibrium:
    pi_r0: float
    lambda0: float
    inv0: float
    tau_rl0: float
    tau_lc0: float


def leading_equilibrium(p: ModelParams) -> Equilibrium:
    """Asymptotic profit rate, employment rate and frozen auxiliary values.

    The growth rate must approach ``alpha + beta``, fixing ``Inv(pi_r0)`` and
    ``Ph(lambda0) = alpha``. Both are inverted exactly.
    """
    _require_exponential(p)
    inv0 = p.v * (p.alpha + p.beta + p.delta)
    try:
        pi0 = p.g_inv.inverse(inv0)
        lam0 = p.g_ph.inverse(p.alpha)
    except ValueError as exc:
        raise NonviableParameters(str(exc)) from None
    return Equilibrium(pi_r0=pi0, lambda0=lam0, inv0=inv0,
                       tau_rl0=p.g_tau_rl(pi0), tau_lc0=p.g_tau_lc(pi0))


def build_linear_system(mu: complex, p: ModelParams, eq: Equilibrium | None = None) -> np.ndarray:
    """Augmented 6x6 matrix ``[A | c]`` with ``A x = c`` for
    ``x = (B_PL0, F_L0, F_D0, W0, P_C0)`` and ``B_C0 = 1``.

    Rows come from the bank-capital, bank-profit, loan, firm-deposit, price
    and profit-rate equations. Only the last is independent of ``mu``.
    """
    eq = eq or leading_equilibrium(p)
    trl, tlc, inv0 = eq.tau_rl0, eq.tau_lc0, eq.inv0
    v, a0 = p.v, p.a0
    dtype = complex if isinstance(mu, complex) or np.iscomplexobj(mu) else float
    M = np.zeros((6, 6), dtype=dtype)
    M[0] = [0, 1 / trl, 0, 0, 0, mu + 1 / tlc]
    M[1] = [-mu - 1 / p.tau_B + p.r_D, p.r_L - p.r_D, 0, 0, 0, 0]
    M[2] = [0, -mu - 1 / trl, 0, 0, inv0 / v, -1 / tlc]
    M[3] = [1 / p.tau_B - 1 / p.tau_W, -p.r_L - 1 / trl + 1 / p.tau_W,
            -mu + p.r_D - 1 / p.tau_W, -1 / (v * a0), inv0 / v, -1 / tlc]
    # price row scaled by (1 - s) so the determinant's constant term does not depend on s
    M[4] = [0, 0, 0, 1 / (p.tau_Pc * a0), (1 - p.s) * (-(mu - p.alpha - p.beta) - 1 / p.tau_Pc), 0]
    M[5] = [0, -p.r_L, p.r_D, -1 / (v * a0), 1 / v - eq.pi_r0, 0]
    return M


def wage_price_block(mu: complex, p: ModelParams, eq: Equilibrium | None = None) -> np.ndarray:
    """Coefficients of ``(W0, P_C0)`` in the wage equation (divided by ``W0``
    after multiplying through by ``P_C0``) stacked on the price equation.

    The block is singular when ``Ph(lambda0) = alpha``.
    """
    eq = eq or leading_equilibrium(p)
    ph = p.g_ph(eq.lambda0)
    g = eq.inv0 / p.v - p.delta
    c = 1 / (p.tau_Pc * p.a0 * (1 - p.s))
    row5 = [c, ph + p.omega * (g - p.alpha - p.beta) - 1 / p.tau_Pc - (mu - p.beta)]
    row6 = [c, -(mu - p.alpha - p.beta) - 1 / p.tau_Pc]
    return np.array([row5, row6])


@dataclass(frozen=True)
class Quintic:
    """Characteristic polynomial, ascending coefficients ``c0..c5`` (scale arbitrary)."""

    coefficients: tuple[float, ...]
    node_residual: float

    def __call__(self, mu):
        return np.polynomial.polynomial.polyval(mu, self.coefficients)

    def roots(self) -> np.ndarray:
        return poly_roots(self.coefficients)


def char_quintic(p: ModelParams) -> Quintic:
    """Determinant of the augmented system, interpolated at Chebyshev nodes on [-2, 2]."""
    eq = leading_equilibrium(p)
    nodes = 2 * np.cos(np.pi * (np.arange(7) + 0.5) / 7)
    dets = np.array([np.linalg.det(build_linear_system(float(x), p, eq)) for x in nodes])
    coef = np.polynomial.polynomial.polyfit(nodes[:6], dets[:6], 5)
    scale = np.max(np.abs(coef))
    resid = abs(np.polynomial.polynomial.polyval(nodes[6], coef) - dets[6]) / scale
    if not resid < QUINTIC_RESIDUAL_TOL:
        raise ArithmeticError(f"determinant is not quintic in mu (relative residual {resid:.3g})")
    if coef[5] == 0:
        raise ArithmeticError("vanishing leading coefficient")
    return Quintic(tuple(float(c) for c in coef), float(resid))


def _backward_residual(c, r):
    k = np.arange(len(c))
    return abs(np.polynomial.polynomial.polyval(r, c)) / np.sum(np.abs(c) * np.abs(r) ** k)


def poly_roots(coeffs, *, max_newton: int = 8) -> np.ndarray:
    """All roots of ``sum c_k x**k`` (ascending order).

    Companion-matrix eigenvalues polished by a few Newton steps; every root
    must satisfy a backward residual below ``1e-12``.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    if c.size < 2:
        raise ValueError("polynomial must have degree >= 1")
    roots = np.roots(c[::-1]).astype(complex)
    dc = np.polynomial.polynomial.polyder(c)
    for i, r in enumerate(roots):
        best, best_res = r, _backward_residual(c, r)
        # already at roundoff level: polishing would only scatter clustered roots
        n_iter = 0 if best_res < 4 * np.finfo(float).eps else max_newton
        for _ in range(n_iter):
            d = np.polynomial.polynomial.polyval(r, dc)
            if d == 0:
                break
            r = r - np.polynomial.polynomial.polyval(r, c) / d
            res = _backward_residual(c, r)
            if res < best_res:
                best, best_res = r, res
            if res < 1e-16:
                break
        if not best_res < ROOT_RESIDUAL_TOL:
            raise ArithmeticError(f"root {best} did not converge (backward residual {best_res:.3g})")
        roots[i] = best
    if np.all(np.isreal(c)):
        # snap tiny imaginary parts of real roots
        roots = np.where(np.abs(roots.imag) < 1e-14 * np.maximum(1, np.abs(roots)), roots.real, roots)
    return roots[np.lexsort((roots.imag, -roots.real))]


class RegimeClass(str, Enum):
    STABLE_GROWTH = "StableGrowth"
    DEFERRED_COLLAPSE = "DeferredCollapse"
    IMMEDIATE_COLLAPSE = "ImmediateCollapse"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class AmplitudeTable:
    """Scale coefficients relative to ``B_C0 = 1`` (``K_r0`` is a second free scale)."""

    mu0: complex
    coefficients: dict[str, complex]
    dropped_row: int
    dropped_residual: float

    @property
    def amplitudes(self) -> dict[str, float]:
        return {k: abs(c) for k, c in self.coefficients.items()}

    @property
    def phase_years(self) -> dict[str, float]:
        im = self.mu0.imag
        if im == 0:
            return {k: 0.0 for k in self.coefficients}
        return {k: math.atan2(c.imag, c.real) / im for k, c in self.coefficients.items()}

    @property
    def realizable(self) -> bool:
        return all(c.real >= 0 for c in self.coefficients.values())

    def __getitem__(self, name: str) -> complex:
        return self.coefficients[name]


def solve_amplitudes(mu0: complex, p: ModelParams, eq: Equilibrium | None = None) -> AmplitudeTable:
    """Solve the consistent overdetermined system at a root ``mu0``.

    The row whose removal leaves the best-conditioned 5x5 system is dropped
    and its residual checked.
    """
    eq = eq or leading_equilibrium(p)
    real = np.isreal(mu0)
    mu = float(np.real(mu0)) if real else complex(mu0)
    M = build_linear_system(mu, p, eq)
    A, c = M[:, :5], M[:, 5]
    best, best_sv = -1, -1.0
    for k in range(6):
        keep = [i for i in range(6) if i != k]
        sv = np.linalg.svd(A[keep], compute_uv=False)[-1]
        if sv > best_sv:
            best, best_sv = k, sv
    keep = [i for i in range(6) if i != best]
    x = np.linalg.solve(A[keep], c[keep])
    scale = np.sum(np.abs(A[best]) * np.abs(x)) + abs(c[best])
    resid = abs(A[best] @ x - c[best]) / scale
    if not resid < DROPPED_ROW_TOL:
        raise ArithmeticError(f"mu0={mu0} is not a consistent root (dropped-row residual {resid:.3g})")
    b, fl, fd, w, pc = (complex(z) for z in x)
    coefs = {"B_PL": b, "F_L": fl, "F_D": fd, "W": w, "P_C": pc, "W_D": fl - fd - b}
    return AmplitudeTable(mu0=complex(mu0), coefficients=coefs, dropped_row=best,
                          dropped_residual=float(resid))


def period_estimates(mu0: complex, table: AmplitudeTable) -> tuple[float, float]:
    """Half-period ``T = pi / Im(mu0)`` and the phase-corrected ``T*``."""
    if complex(mu0).imag == 0:
        return math.inf, math.inf
    T = math.pi / complex(mu0).imag
    lead = max(0.0, max(table.phase_years.values()))
    return T, T - lead


@dataclass(frozen=True)
class LeadingMode:
    mu0: complex
    all_roots: tuple[complex, ...]
    lambda0: float
    pi_r0: float
    regime: RegimeClass
    T: float
    T_star: float
    amplitudes: AmplitudeTable | None
    quintic: Quintic = field(repr=False, default=None)

    @property
    def realizable(self) -> bool:
        return self.amplitudes is not None and self.amplitudes.realizable

    def to_dict(self) -> dict:
        def cx(z):
            return {"re": float(np.real(z)), "im": float(np.imag(z))}

        amps = {}
        if self.amplitudes is not None:
            ph = self.amplitudes.phase_years
            for k, z in self.amplitudes.coefficients.items():
                amps[k] = {**cx(z), "amp": abs(z), "phase_years": ph[k]}
        return {
            "mu0": cx(self.mu0),
            "roots": [cx(r) for r in self.all_roots],
            "regime": self.regime.value,
            "lambda0": self.lambda0,
            "pi_r0": self.pi_r0,
            "T": _json_float(self.T),
            "T_star": _json_float(self.T_star),
            "amplitudes": amps,
            "realizable": self.realizable,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _json_float(x: float):
    return x if math.isfinite(x) else ("Infinity" if x > 0 else "-Infinity")


def dominant_root(roots) -> complex:
    """Root of maximal real part, taking the positive-imaginary member of a pair."""
    roots = np.asarray(roots, dtype=complex)
    top = roots.real.max()
    cand = roots[np.abs(roots.real - top) <= 1e-12 * max(1.0, abs(top))]
    r = cand[np.argmax(cand.imag)]
    return complex(r.real, abs(r.imag))


def classify(p: ModelParams, tol: float = BORDER_TOL) -> LeadingMode:
    """Dominant growth mode, regime, amplitude table and period estimates."""
    eq = leading_equilibrium(p)
    q = char_quintic(p)
    roots = q.roots()
    mu0 = dominant_root(roots)
    degenerate = abs(mu0.real) < tol or 0 < abs(mu0.imag) < tol
    if mu0.imag == 0:
        reals = sorted(r.real for r in roots if r.imag == 0)
        degenerate |= len(reals) > 1 and reals[-1] - reals[-2] < tol
    try:
        table = solve_amplitudes(mu0 if mu0.imag else mu0.real, p, eq)
    except ArithmeticError:
        table = None
    if degenerate:
        regime = RegimeClass.DEGENERATE
    elif mu0.real <= 0 or table is None or not table.realizable:
        regime = RegimeClass.IMMEDIATE_COLLAPSE
    elif mu0.imag != 0:
        regime = RegimeClass.DEFERRED_COLLAPSE
    else:
        regime = RegimeClass.STABLE_GROWTH
    T, Ts = period_estimates(mu0, table) if table is not None else (
        (math.inf, math.inf) if mu0.imag == 0 else (math.pi / mu0.imag,) * 2)
    return LeadingMode(mu0=mu0, all_roots=tuple(complex(r) for r in roots), lambda0=eq.lambda0,
                       pi_r0=eq.pi_r0, regime=regime, T=T, T_star=Ts, amplitudes=table, quintic=q)


def wage_coefficient_closed_form(mu0: complex, p: ModelParams) -> complex:
    """Closed-form wage coefficient ``W0`` (relative to ``B_C0 = 1``).

    Valid for the standard auxiliary-function shapes, whose constants are
    embedded in the numerator and denominator polynomials in
    ``gamma = (v (alpha + beta + delta))**(1/21)``.
    """
    _require_exponential(p)
    if not p.has_standard_shapes:
        raise ValueError("closed form requires the standard auxiliary-function shapes")
    mu = complex(mu0)
    e = math.e
    k = p.alpha + p.beta + p.delta
    g = (p.v * k) ** (1 / 21)
    N = (6125 * (5 * e ** 2) ** (1 / 7) * (mu + 2) * g ** 26
         + 175 * (5 ** 4 * e) ** (1 / 7) * (6 * mu + 13) * g ** 20
         + 75 * (3 * mu + 7) * g ** 14
         + 735 * mu * (5 ** 17 / e) ** (1 / 21) * g ** 12
         + 105 * (5 ** 5 / e ** 4) ** (1 / 21) * (6 * mu + 1) * g ** 6
         + 9 * (5 ** 2 / e) ** (1 / 3) * (3 * mu + 1))
    D = (7 * (5 ** 4 * e) ** (1 / 7) * g ** 6 + 3) * (25 * g ** 14 + 3 * (5 ** 2 / e) ** (1 / 3))
    # overall sign fixed so that the result agrees with the linear solve
    return -mu * (p.s - 1) / k * (1 + p.tau_Pc * (mu - p.alpha - p.beta)) * N / D


def gamma_parameter(p: ModelParams) -> float:
    return (p.v * (p.alpha + p.beta + p.delta)) ** (1 / 21)
