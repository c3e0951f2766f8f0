"""Numerical experiments: exponential fits, lagged ratios, Monte Carlo sweeps
and the bistability (branch switch / separatrix) runs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .integrator import IntegrationConfig, StepSizeUnderflow, Trajectory, integrate
from .leading import AmplitudeTable, RegimeClass, classify
from .model import (STANDARD_IC, STANDARD_WD0, ConfigError, ModelParams, State,
                    conserved_constant)
from .parallel import pmap

MIN_FIT_SAMPLES = 10
PARAM_NAMES = ("alpha", "beta", "delta", "omega", "tau_B", "tau_W", "tau_Pc",
               "s", "a0", "v", "r_L", "r_D")


# ---------------------------------------------------------------------------
# Exponential fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpFit:
    """``A e^{rate t}`` (real) or ``A e^{Re(rate) t} sin(Im(rate) t + phase)`` (complex)."""

    rate: complex
    amplitude: float
    phase: float
    window: tuple[float, float]
    residual: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        r = complex(self.rate)
        if r.imag == 0:
            return self.amplitude * np.exp(r.real * t)
        return self.amplitude * np.exp(r.real * t) * np.sin(r.imag * t + self.phase)


def _window(t, y, window):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (t >= window[0]) & (t <= window[1])
    if m.sum() < MIN_FIT_SAMPLES:
        raise ValueError(f"fit window {window} holds fewer than {MIN_FIT_SAMPLES} samples")
    return t[m], y[m]


def fit_complex_exponential(t, series, window: tuple[float, float], complex_mode: bool = False,
                            mu0: complex | None = None, fix_rates: bool = False) -> ExpFit:
    """Fit an exponential (optionally oscillating) law to ``series`` over ``window``.

    Real mode is a linear regression of ``log(series)``. Complex mode is a
    nonlinear least-squares fit seeded from ``mu0``; with ``fix_rates`` the
    rates stay at ``mu0`` and only the amplitude and phase are fitted, in log
    space (the series must then stay positive over the window).
    """
    tt, yy = _window(t, series, window)
    if not complex_mode:
        if np.any(yy <= 0):
            raise ValueError("real-mode log fit needs a positive series")
        (rate, c), res, *_ = np.polyfit(tt, np.log(yy), 1, full=True)
        resid = math.sqrt(float(res[0]) / tt.size) if len(res) else 0.0
        return ExpFit(rate=float(rate), amplitude=math.exp(c), phase=0.0,
                      window=tuple(window), residual=resid)
    if mu0 is None:
        raise ValueError("complex mode needs a seed rate mu0")
    r0, w0 = complex(mu0).real, complex(mu0).imag
    # linear seed for amplitude and phase
    X = np.column_stack([np.exp(r0 * tt) * np.sin(w0 * tt), np.exp(r0 * tt) * np.cos(w0 * tt)])
    c, *_ = np.linalg.lstsq(X / np.abs(yy).max(), yy / np.abs(yy).max(), rcond=None)
    A0, ph0 = math.hypot(*c), math.atan2(c[1], c[0])
    if fix_rates:
        if np.any(yy <= 0):
            raise ValueError("log fit with fixed rates needs a positive series")
        ly = np.log(yy)

        def res_fn(q):
            s = np.sin(w0 * tt + q[1])
            return ly - (np.log(q[0]) + r0 * tt + np.log(np.maximum(np.abs(s), 1e-300)))

        sol = least_squares(res_fn, [A0, ph0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        A, ph = sol.x
        r, w = r0, w0
    else:
        scale = np.abs(yy).max()

        def res_fn(q):
            return (q[0] * np.exp(q[2] * tt) * np.sin(q[3] * tt + q[1]) - yy) / scale

        sol = least_squares(res_fn, [A0, ph0, r0, w0], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            x_scale="jac")
        A, ph, r, w = sol.x
    if A < 0:
        A, ph = -A, ph + math.pi
    ph = (ph + math.pi) % (2 * math.pi) - math.pi
    return ExpFit(rate=complex(r, w), amplitude=float(A), phase=float(ph), window=tuple(window),
                  residual=float(np.sqrt(np.mean(sol.fun ** 2))))


# ---------------------------------------------------------------------------
# Lagged ratio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioSeries:
    times: np.ndarray
    ratio: np.ndarray
    raw: np.ndarray
    lag: float
    predicted: float

    def max_deviation(self, window) -> tuple[float, float]:
        """Largest deviation from 1 of the lagged and the raw normalized ratio."""
        m = (self.times >= window[0]) & (self.times <= window[1])
        return float(np.max(np.abs(self.ratio[m] - 1))), float(np.max(np.abs(self.raw[m] - 1)))


def ratio_diagnostic(traj: Trajectory, table: AmplitudeTable, numerator: str = "F_L",
                     denominator: str = "F_D") -> RatioSeries:
    """Phase-lagged ratio ``X(t - lag) / Y(t)``, normalized so that the
    leading-order prediction is exactly one.

    The shifted numerator is also multiplied by ``exp(Re(mu0) lag)`` to undo
    the growth lost over the lag. ``raw`` is the unshifted ratio over the
    modulus ratio.
    """
    ph = table.phase_years
    lag = ph[numerator] - ph[denominator]
    pred = abs(table[numerator]) / abs(table[denominator])
    t = traj.times
    m = (t - lag >= t[0]) & (t - lag <= t[-1])
    tt = t[m]
    num = traj.field_at(numerator, tt - lag) if lag else traj[numerator][m]
    den = traj[denominator][m]
    growth = math.exp(table.mu0.real * lag)
    return RatioSeries(times=tt, ratio=num * growth / den / pred,
                       raw=traj[numerator][m] / den / pred, lag=lag, predicted=pred)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def run_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for run ``index`` of an experiment seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class McSummary:
    n: int
    seed: int
    values: np.ndarray
    outcomes: list[str]
    kind: str = "dt_shift"
    extra: dict = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]

    @property
    def n_valid(self) -> int:
        return int(self.valid.size)

    @property
    def n_excluded(self) -> int:
        return self.n - self.n_valid

    @property
    def mean(self) -> float:
        return float(np.mean(self.valid)) if self.n_valid else math.nan

    @property
    def sd(self) -> float:
        return float(np.std(self.valid, ddof=1)) if self.n_valid > 1 else math.nan

    @property
    def min(self) -> float:
        return float(np.min(self.valid)) if self.n_valid else math.nan

    @property
    def max(self) -> float:
        return float(np.max(self.valid)) if self.n_valid else math.nan

    def summary_dict(self) -> dict:
        nan = lambda x: None if not math.isfinite(x) else x
        return {"kind": self.kind, "n": self.n, "seed": self.seed, "n_valid": self.n_valid,
                "n_excluded": self.n_excluded, "mean": nan(self.mean), "sd": nan(self.sd),
                "min": nan(self.min), "max": nan(self.max)}

    def write_csv(self, path) -> Path:
        path = Path(path)
        cols = [k for k, v in self.extra.items() if len(v) == self.n]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", self.kind, "outcome", *cols])
            for i in range(self.n):
                row = [i, f"{self.values[i]:.17g}", self.outcomes[i]]
                row += [f"{self.extra[c][i]:.17g}" for c in cols]
                w.writerow(row)
        return path


def _mc_ic_run(i, *, p, base, sigma, seed, window, mu0, t_end, sample_t):
    z = run_rng(seed, i).standard_normal(8)
    y0 = base * (1 + sigma * z)
    cst = conserved_constant(y0, STANDARD_WD0)
    cfg = IntegrationConfig(t_span=(0.0, t_end))
    try:
        tr = integrate(p, y0, cst, cfg, keep_dense=False)
    except (ArithmeticError, StepSizeUnderflow, ValueError):
        return math.nan, math.nan, math.nan, "failed"
    ev = tr.event("collapse")
    if ev is not None and ev.t <= window[1]:
        return math.nan, math.nan, math.nan, "immediate_collapse"
    try:
        fit = fit_complex_exponential(tr.times, tr["B_C"], window, True, mu0, fix_rates=True)
    except ValueError:
        return math.nan, math.nan, math.nan, "fit_failed"
    bc = float(np.interp(sample_t, tr.times, tr["B_C"])) if tr.times[-1] >= sample_t else math.nan
    return fit.phase / mu0.imag, fit.amplitude, bc, "ok"


def monte_carlo_ic(p: ModelParams, sigma: float = 0.01, n: int = 100, seed: int = 0,
                   window: tuple[float, float] = (60.0, 90.0), ic: State = STANDARD_IC,
                   sample_t: float = 120.0, jobs: int = 1) -> McSummary:
    """Time shifts ``phase / Im(mu0)`` of runs from fractionally perturbed initial conditions.

    Worker deposits keep their standard initial value, so the accounting
    constant is recomputed per run. Runs that collapse before the end of the
    fit window are excluded and counted.
    """
    mode = classify(p)
    if mode.regime is not RegimeClass.DEFERRED_COLLAPSE:
        raise ValueError(f"initial-condition Monte Carlo needs a deferred collapse, got {mode.regime.value}")
    fn = partial(_mc_ic_run, p=p, base=ic.as_array(), sigma=sigma, seed=seed, window=window,
                 mu0=mode.mu0, t_end=max(window[1], sample_t), sample_t=sample_t)
    rows = pmap(fn, range(n), jobs)
    vals = np.array([r[0] for r in rows], dtype=float)
    return McSummary(n=n, seed=seed, values=vals, outcomes=[r[3] for r in rows], kind="dt_shift",
                     extra={"amplitude": np.array([r[1] for r in rows]),
                            f"B_C_at_{sample_t:g}": np.array([r[2] for r in rows])})


def _mc_param_run(i, *, p, sigma, seed, names):
    z = run_rng(seed, i).standard_normal(len(names))
    try:
        q = p.with_(**{k: getattr(p, k) * (1 + sigma * zk) for k, zk in zip(names, z)})
        mode = classify(q)
    except (ConfigError, ValueError, ArithmeticError):
        return math.nan, "nonviable"
    if mode.regime is not RegimeClass.DEFERRED_COLLAPSE:
        return math.nan, mode.regime.value
    ph = mode.amplitudes.phase_years
    return ph["F_L"] - ph["F_D"], mode.regime.value


def monte_carlo_params(p: ModelParams, sigma: float = 0.10, n: int = 1000, seed: int = 0,
                       names: Sequence[str] = PARAM_NAMES, jobs: int = 1) -> McSummary:
    """Loan-to-deposit lag over models with fractionally perturbed parameters.

    Only deferred-collapse models carry a lag; other regimes and nonviable
    draws are recorded in ``outcomes``.
    """
    fn = partial(_mc_param_run, p=p, sigma=sigma, seed=seed, names=tuple(names))
    rows = pmap(fn, range(n), jobs)
    return McSummary(n=n, seed=seed, values=np.array([r[0] for r in rows], dtype=float),
                     outcomes=[r[1] for r in rows], kind="lag")


# ---------------------------------------------------------------------------
# Bistability
# ---------------------------------------------------------------------------


@dataclass
class BranchOutcome:
    outcome: str  # "growth", "collapse" or "undetermined"
    late_rate: float
    mu0_after: float
    trajectory: Trajectory = field(repr=False)


def _late_slope(tr: Trajectory, span: float = 20.0) -> float:
    t = tr.times
    m = t >= t[-1] - span
    y = tr["B_C"][m]
    if m.sum() < 3 or np.any(y <= 0):
        return math.nan
    return float(np.polyfit(t[m], np.log(y), 1)[0])


def _join(a: Trajectory, b: Trajectory, p: ModelParams) -> Trajectory:
    keep = a.times < b.times[0]
    der = {k: np.concatenate([a.derived[k][keep], b.derived[k]]) for k in b.derived}
    return Trajectory(times=np.concatenate([a.times[keep], b.times]),
                      states=np.vstack([a.states[keep], b.states]), derived=der, cst=a.cst,
                      params=p, events=a.events + b.events, status=b.status, dense=None)


def classify_outcome(tr: Trajectory, mu0: float, tol: float = 0.2, after: float = 0.0) -> str:
    """``collapse`` if the collapse event fired, ``growth`` if the last 20 years
    grow at a rate within ``tol`` (relative) of ``mu0``."""
    if any(e.name == "collapse" and e.t >= after for e in tr.events):
        return "collapse"
    rate = _late_slope(tr)
    if math.isfinite(rate) and abs(rate - mu0) <= tol * abs(mu0):
        return "growth"
    return "undetermined"


def branch_switch(p_before: ModelParams, p_after: ModelParams, t_switch: float,
                  ic: State = STANDARD_IC, cst: float | None = None, horizon: float = 250.0,
                  cfg: IntegrationConfig | None = None) -> BranchOutcome:
    """Integrate with ``p_before`` up to ``t_switch`` and with ``p_after`` afterwards."""
    cst = conserved_constant(ic) if cst is None else cst
    cfg = cfg or IntegrationConfig()
    y0 = ic.as_array() if isinstance(ic, State) else np.asarray(ic, dtype=float)
    if t_switch > 0:
        first = integrate(p_before, y0, cst, replace(cfg, t_span=(0.0, t_switch)), keep_dense=True)
        if first.status != "completed" or first.times[-1] < t_switch:
            y1 = first.states[-1]
        else:
            y1 = first.dense(t_switch)[:8]
        second = integrate(p_after, y1, cst, replace(cfg, t_span=(t_switch, horizon)), keep_dense=False)
        tr = _join(first, second, p_after)
    else:
        tr = integrate(p_after, y0, cst, replace(cfg, t_span=(0.0, horizon)), keep_dense=False)
    mu_after = classify(p_after).mu0.real
    return BranchOutcome(outcome=classify_outcome(tr, mu_after, after=t_switch), late_rate=_late_slope(tr),
                         mu0_after=mu_after, trajectory=tr)


@dataclass
class SeparatrixResult:
    t_star: float
    bracket: tuple[float, float]
    slope: float
    slope_span: tuple[float, float]
    outcomes: tuple[str, str]


def quasi_linear_span(t, logy, *, tol: float = 0.005, smooth: float = 2.0, after: float = 0.0):
    """Longest interval on which the local log-slope varies by less than ``tol``.

    Returns ``(t_start, t_end, slope)`` with the slope from a regression over the span.
    """
    t = np.asarray(t)
    dt = t[1] - t[0]
    k = max(1, int(round(smooth / 2 / dt)))
    sl = (logy[2 * k:] - logy[:-2 * k]) / (t[2 * k:] - t[:-2 * k])
    ts = t[k:-k]
    ok = ts >= after
    sl, ts = sl[ok], ts[ok]
    best = (0, 0)
    lo = 0
    from collections import deque
    mx, mn = deque(), deque()
    for hi in range(sl.size):
        while mx and sl[mx[-1]] <= sl[hi]:
            mx.pop()
        mx.append(hi)
        while mn and sl[mn[-1]] >= sl[hi]:
            mn.pop()
        mn.append(hi)
        while sl[mx[0]] - sl[mn[0]] > tol:
            lo += 1
            if mx[0] < lo:
                mx.popleft()
            if mn[0] < lo:
                mn.popleft()
        if hi - lo > best[1] - best[0]:
            best = (lo, hi)
    a, b = ts[best[0]], ts[best[1]]
    m = (t >= a) & (t <= b)
    return float(a), float(b), float(np.polyfit(t[m], logy[m], 1)[0])


def separatrix_search(p_before: ModelParams, p_after: ModelParams, bracket: tuple[float, float],
                      ic: State = STANDARD_IC, cst: float | None = None, horizon: float = 250.0,
                      width: float = 1e-7) -> SeparatrixResult:
    """Bisect the switch time between a growth and a collapse outcome.

    The intermediate growth rate is measured on the two runs at the ends of
    the final bracket, over the overlap of their longest quasi-linear spans.
    """
    t1, t2 = bracket
    if not t2 > t1:
        raise ValueError("degenerate bracket")
    o1 = branch_switch(p_before, p_after, t1, ic, cst, horizon)
    o2 = branch_switch(p_before, p_after, t2, ic, cst, horizon)
    if (o1.outcome == "collapse") == (o2.outcome == "collapse"):
        raise ValueError(f"bracket ends give the same outcome ({o1.outcome}, {o2.outcome})")
    lo, hi = (o1, o2)
    a, b = t1, t2
    while b - a > width:
        m = 0.5 * (a + b)
        om = branch_switch(p_before, p_after, m, ic, cst, horizon)
        if (om.outcome == "collapse") == (lo.outcome == "collapse"):
            a, lo = m, om
        else:
            b, hi = m, om
    # the separatrix run lies between the two final runs: average their slopes
    # over the common part of their quasi-linear spans
    spans, logs = [], []
    for o, ts in ((lo, a), (hi, b)):
        tr = o.trajectory
        y = tr["B_C"]
        good = y > 0
        ly = np.log(y[good])
        spans.append(quasi_linear_span(tr.times[good], ly, after=ts + 5.0)[:2])
        logs.append((tr.times[good], ly))
    ta, tb = max(spans[0][0], spans[1][0]), min(spans[0][1], spans[1][1])
    if not tb - ta > 1.0:
        raise ArithmeticError("near-critical runs share no quasi-linear span")
    slopes = [np.polyfit(tt[(tt >= ta) & (tt <= tb)], ly[(tt >= ta) & (tt <= tb)], 1)[0]
              for tt, ly in logs]
    return SeparatrixResult(t_star=0.5 * (a + b), bracket=(a, b), slope=float(np.mean(slopes)),
                            slope_span=(ta, tb), outcomes=(o1.outcome, o2.outcome))


def to_json(obj) -> str:
    if hasattr(obj, "summary_dict"):
        return json.dumps(obj.summary_dict())
    return json.dumps(asdict(obj))
