"""Terminal-collapse asymptotics.

Once the profit rate runs away to large negative values the auxiliary
functions saturate (investment to zero, loan repayment time to its floor,
lending time to infinity, wage pressure to its floor) and the system becomes
exactly soluble: constants plus decaying exponentials for the stocks, and a
double exponential for the price level.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .integrator import Trajectory
from .leading import LeadingMode, RegimeClass
from .model import ModelParams

ONSET_PERSIST = 2.0
SMALL_RELATIVE = 1e-2


@dataclass(frozen=True)
class SaturationLimits:
    inv_sat: float
    tau_rl_sat: float
    tau_lc_sat: float
    ph_sat: float
    g_sat: float


def saturation_limits(p: ModelParams) -> SaturationLimits:
    """Auxiliary-function limits as the profit rate and employment collapse."""
    inv = p.g_inv.limit(-1)
    return SaturationLimits(inv_sat=inv, tau_rl_sat=p.g_tau_rl.limit(-1),
                            tau_lc_sat=p.g_tau_lc.limit(-1), ph_sat=p.g_ph.limit(-1),
                            g_sat=inv / p.v - p.delta)


def collapse_mu(p: ModelParams) -> float:
    return p.omega * (p.alpha + p.beta + p.delta)


def bp0_closed_form(p: ModelParams, cst: float) -> float:
    """Late-time bank profit/loss level: ``r_D cst / (1/tau_B - r_D)``."""
    return p.r_D * cst / (1 / p.tau_B - p.r_D)


def fd0_closed_form(p: ModelParams, cst: float) -> float:
    """Late-time firm deposits once loans, wages and investment have vanished."""
    bp = bp0_closed_form(p, cst)
    return (bp * (1 / p.tau_B - 1 / p.tau_W) - cst / p.tau_W) / (1 / p.tau_W - p.r_D)


@dataclass(frozen=True)
class CollapseFit:
    bc0: float
    bc1: float
    fl1: float
    kr1: float
    lambda1: float
    fd0: float
    fd1: float
    bp0: float
    bp1: float
    c1: float
    c2: float
    mu_c: float
    ph_sat: float
    tau_rl_sat: float
    kr_rate: float = math.nan
    lambda_rate: float = math.nan
    window: tuple[float, float] = (math.nan, math.nan)
    onset_t: float = math.nan
    transient_rate: float = math.nan
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in d.items()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _kappa(p: ModelParams, ph_sat: float, mu_c: float) -> float:
    return p.alpha - ph_sat + mu_c


def price_closed_form(t, c1: float, c2: float, p: ModelParams, ph_sat: float, mu_c: float):
    """Double-exponential price level."""
    k = _kappa(p, ph_sat, mu_c)
    t = np.asarray(t, dtype=float)
    return np.exp((np.exp(-k * t) * c1 - c2) / k + (1 - t) / p.tau_Pc)


def collapse_predict(t, fit: CollapseFit, p: ModelParams) -> np.ndarray:
    """All eight fields from the collapse closed forms (rows follow the state order)."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-t / fit.tau_rl_sat)
    P = price_closed_form(t, fit.c1, fit.c2, p, fit.ph_sat, fit.mu_c)
    W = fit.c1 * (p.s - 1) * p.a0 * p.tau_Pc * np.exp((fit.ph_sat - fit.mu_c) * t) * P
    out = np.array([
        fit.bc0 + fit.bc1 * e,
        fit.bp0 + fit.bp1 * e,
        fit.fl1 * e,
        fit.fd0 + fit.fd1 * e,
        W,
        P,
        fit.kr1 * np.exp(-p.delta * t),
        fit.lambda1 * np.exp(-(p.alpha + p.beta + p.delta) * t),
    ])
    return out.T


def wage_constant_series(traj: Trajectory, p: ModelParams, ph_sat: float, mu_c: float) -> np.ndarray:
    """``c1(t)``, which saturates to a constant once the collapse forms hold."""
    return (traj["W"] / traj["P_C"] * np.exp(-(ph_sat - mu_c) * traj.times)
            / ((p.s - 1) * p.a0 * p.tau_Pc))


def price_constant_series(traj: Trajectory, p: ModelParams, c1, ph_sat: float, mu_c: float) -> np.ndarray:
    k = _kappa(p, ph_sat, mu_c)
    t = traj.times
    return c1 * np.exp(-k * t) - k * (np.log(traj["P_C"]) + (t - 1) / p.tau_Pc)


def _lsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = X @ coef - y
    return coef, float(np.sqrt(np.mean(r * r)) / max(np.max(np.abs(y)), 1e-300))


def fit_collapse(traj: Trajectory, p: ModelParams | None = None,
                 window: tuple[float, float] | None = None) -> CollapseFit:
    """Fit the collapse constants on a late window.

    The default window starts two years after the collapse event and runs to
    the end of the trajectory. ``c1`` and ``c2`` are the window means of their
    saturating series; the remaining coefficients come from linear least
    squares with the saturated rates. ``K_r`` and ``lambda`` decay rates are
    also fitted freely as a check. Relative RMS residuals are reported per field.
    """
    p = p or traj.params
    ev = traj.event("collapse")
    if ev is None:
        raise ValueError("trajectory has no collapse event")
    if window is None:
        window = (ev.t + 2.0, traj.times[-1])
    if window[0] < ev.t:
        raise ValueError(f"fit window starts at {window[0]:g}, before collapse onset {ev.t:.4f}")
    m = (traj.times >= window[0]) & (traj.times <= window[1])
    if m.sum() < 5:
        raise ValueError("collapse fit window holds too few samples")
    t = traj.times[m]
    lim = saturation_limits(p)
    mu_c = collapse_mu(p)
    c1 = float(np.mean(wage_constant_series(traj, p, lim.ph_sat, mu_c)[m]))
    c2 = float(np.mean(price_constant_series(traj, p, c1, lim.ph_sat, mu_c)[m]))

    e = np.exp(-t / lim.tau_rl_sat)
    one = np.ones_like(t)
    res = {}
    (bc0, bc1), res["B_C"] = _lsq(np.column_stack([one, e]), traj["B_C"][m])
    (fl1,), res["F_L"] = _lsq(e[:, None], traj["F_L"][m])
    (fd0, fd1), res["F_D"] = _lsq(np.column_stack([one, e]), traj["F_D"][m])
    (bp0, bp1), res["B_PL"] = _lsq(np.column_stack([one, e]), traj["B_PL"][m])
    kr_rate, lkr = np.polyfit(t, np.log(traj["K_r"][m]), 1)
    lam_rate, llam = np.polyfit(t, np.log(traj["lambda"][m]), 1)
    kr1 = float(np.exp(lkr))
    lam1 = float(np.exp(llam))
    res["K_r"] = float(np.sqrt(np.mean((kr1 * np.exp(kr_rate * t) / traj["K_r"][m] - 1) ** 2)))
    res["lambda"] = float(np.sqrt(np.mean((lam1 * np.exp(lam_rate * t) / traj["lambda"][m] - 1) ** 2)))
    P = price_closed_form(t, c1, c2, p, lim.ph_sat, mu_c)
    res["P_C"] = float(np.sqrt(np.mean((P / traj["P_C"][m] - 1) ** 2)))
    return CollapseFit(bc0=bc0, bc1=bc1, fl1=fl1, kr1=kr1, lambda1=lam1, fd0=fd0, fd1=fd1,
                       bp0=bp0, bp1=bp1, c1=c1, c2=c2, mu_c=mu_c, ph_sat=lim.ph_sat,
                       tau_rl_sat=lim.tau_rl_sat, kr_rate=float(kr_rate),
                       lambda_rate=float(lam_rate), window=(float(window[0]), float(window[1])),
                       residuals=res)


def fit_growth_reference(t, series, mu0: complex, window) -> tuple[float, float]:
    """Amplitude and phase of ``A e^{Re(mu0) t} sin(Im(mu0) t + phi)`` by a log least-squares fit."""
    from scipy.optimize import least_squares

    t = np.asarray(t)
    m = (t >= window[0]) & (t <= window[1])
    tt, yy = t[m], np.asarray(series)[m]
    if np.any(yy <= 0):
        raise ValueError("reference fit needs a positive series in the window")
    r, w = mu0.real, mu0.imag

    def resid(q):
        s = np.sin(w * tt + q[1])
        return np.log(yy) - (np.log(q[0]) + r * tt + np.log(np.abs(s) + 1e-300))

    # linear least squares for the seed
    X = np.column_stack([np.exp(r * tt) * np.sin(w * tt), np.exp(r * tt) * np.cos(w * tt)])
    c, *_ = np.linalg.lstsq(X / yy[:, None], np.ones_like(tt), rcond=None)
    sol = least_squares(resid, [math.hypot(*c), math.atan2(c[1], c[0])], xtol=1e-15, ftol=1e-15)
    return float(sol.x[0]), float(sol.x[1])


def _envelope(L, half: int):
    from scipy.ndimage import maximum_filter1d
    return maximum_filter1d(L, size=2 * half + 1, mode="nearest")


def transition_detect(traj: Trajectory, mode: LeadingMode,
                      fit_window: tuple[float, float] = (70.0, 100.0)) -> tuple[float, float]:
    """Onset time and growth rate of the departure from the leading-order growth.

    ``B_C`` is compared with the leading-order form fitted over
    ``fit_window``. The log-residual is smoothed by a one-year running maximum;
    the onset is the first time after the start of the fit window from which
    the smoothed residual rises across each half-year for at least two years.
    The rate is the regression slope of the log-residual from the onset to the
    point where the relative residual reaches one percent.
    """
    if mode.regime is not RegimeClass.DEFERRED_COLLAPSE:
        raise ValueError(f"stable run: transition detection needs a deferred collapse "
                         f"(regime {mode.regime.value})")
    t = traj.times
    B = traj["B_C"]
    A, phi = fit_growth_reference(t, B, mode.mu0, fit_window)
    pred = A * np.exp(mode.mu0.real * t) * np.sin(mode.mu0.imag * t + phi)
    with np.errstate(divide="ignore"):
        L = np.log(np.abs(B - pred))
    dt = t[1] - t[0]
    half = max(1, int(round(0.5 / dt)))
    env = _envelope(L, half)
    step = half
    persist = int(round(ONSET_PERSIST / dt))
    rel = np.abs(B / pred - 1)
    start = np.searchsorted(t, fit_window[0])
    onset_i = None
    for i in range(start, len(t) - persist - step):
        seg = env[i:i + persist + step:step]
        if np.all(np.diff(seg) > 0):
            onset_i = i
            break
    if onset_i is None:
        raise ValueError("stable run: no sustained departure from leading-order growth")
    big = np.nonzero(rel[onset_i:] > SMALL_RELATIVE)[0]
    end_i = onset_i + (big[0] if big.size else len(t) - 1 - onset_i)
    if end_i - onset_i < 5:
        end_i = min(len(t) - 1, onset_i + persist)
    rate = np.polyfit(t[onset_i:end_i + 1], env[onset_i:end_i + 1], 1)[0]
    return float(t[onset_i]), float(rate)
