"""Adaptive Dormand-Prince 5(4) integration with dense output and event detection."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .model import (DERIVED_FIELDS, STATE_FIELDS, DivergenceError, ModelParams,
                    State, derived, rhs)

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (4th order), coefficients of theta, theta^2, theta^3, theta^4
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_PI_ALPHA = 0.7 / 5
_PI_BETA = 0.4 / 5
_MIN_FACTOR, _MAX_FACTOR = 0.2, 5.0
H_MIN = 1e-12
EVENT_TOL = 1e-8


class StepSizeUnderflow(RuntimeError):
    """Step size fell below ``H_MIN``; ``last_t``/``last_state`` hold the last accepted point."""

    def __init__(self, msg, last_t, last_state):
        super().__init__(msg)
        self.last_t = last_t
        self.last_state = last_state


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 0.25
    t_span: tuple[float, float] = (0.0, 150.0)
    sample_dt: float = 0.05
    blowup_norm: float = 1e12
    collapse_pi: float = -1.0
    collapse_hold: float = 1.0
    stop_after_collapse: float | None = None
    lockon_tol: float = 1e-3
    nine_state: bool = False
    # treat an overflowing lending time as infinite instead of stopping
    saturate_lending: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.t_span[1] > self.t_span[0]:
            raise ValueError("t_span must be increasing")
        if not (self.sample_dt > 0 and self.max_step > 0):
            raise ValueError("sample_dt and max_step must be positive")


@dataclass(frozen=True)
class Event:
    name: str
    t: float
    state: tuple[float, ...]


class DenseSolution:
    """Piecewise quartic interpolant built from accepted steps."""

    def __init__(self):
        self._t0: list[float] = []
        self._h: list[float] = []
        self._y0: list[np.ndarray] = []
        self._Q: list[np.ndarray] = []

    def append(self, t0, h, y0, Q):
        self._t0.append(t0)
        self._h.append(h)
        self._y0.append(y0)
        self._Q.append(Q)

    @property
    def t_min(self) -> float:
        return self._t0[0]

    @property
    def t_max(self) -> float:
        return self._t0[-1] + self._h[-1]

    def _eval(self, k: int, t: float) -> np.ndarray:
        h = self._h[k]
        th = (t - self._t0[k]) / h
        return self._y0[k] + h * (self._Q[k] @ np.array([th, th * th, th ** 3, th ** 4]))

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if ts.min() < self.t_min - 1e-12 or ts.max() > self.t_max + 1e-12:
            raise ValueError("time outside the integrated span")
        idx = np.searchsorted(self._t0, ts, side="right") - 1
        idx = np.clip(idx, 0, len(self._t0) - 1)
        out = np.array([self._eval(k, t_) for k, t_ in zip(idx, ts)])
        return out[0] if scalar else out


def _step(f, t, y, h, k0):
    K = np.empty((7, y.size))
    K[0] = k0
    for i in range(1, 6):
        dy = np.dot(_A[i], K[:i]) * h
        K[i] = f(t + _C[i] * h, y + dy)
    y_new = y + h * (_B[:6] @ K[:6])
    K[6] = f(t + h, y_new)
    err = h * (_E @ K)
    return y_new, err, K


def _bisect(fn, a, b, fa, tol=EVENT_TOL):
    """Root of a sign change of ``fn`` on [a, b] (``fa = fn(a)``)."""
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


@dataclass
class Trajectory:
    """Sampled solution plus derived quantities and the event log."""

    times: np.ndarray
    states: np.ndarray
    derived: dict[str, np.ndarray]
    cst: float
    params: ModelParams
    events: list[Event] = field(default_factory=list)
    status: str = "completed"
    dense: DenseSolution | None = None

    def __len__(self):
        return self.times.size

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.times
        if name in STATE_FIELDS:
            return self.states[:, STATE_FIELDS.index(name)]
        if name == "lam":
            return self.states[:, 7]
        return self.derived[name]

    def event(self, name: str) -> Event | None:
        return next((e for e in self.events if e.name == name), None)

    def at(self, t) -> np.ndarray:
        """State(s) at arbitrary time(s) from the dense interpolant (or a cubic spline of samples)."""
        if self.dense is not None:
            return self.dense(t)[..., :8]
        from scipy.interpolate import CubicSpline
        return CubicSpline(self.times, self.states, axis=0)(t)

    def field_at(self, name: str, t) -> np.ndarray:
        return self.at(t)[..., STATE_FIELDS.index(name)]

    # -- CSV ---------------------------------------------------------------
    CSV_HEADER = ("t", "B_C", "B_PL", "F_L", "F_D", "W_D", "W", "P_C", "K_r", "lambda", "pi_r", "g")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            for i in range(self.times.size):
                y = self.states[i]
                row = [self.times[i], *y[:4], self.derived["W_D"][i], *y[4:8],
                       self.derived["pi_r"][i], self.derived["g"][i]]
                w.writerow([f"{x:.17g}" for x in row])
        return path

    @classmethod
    def from_csv(cls, path, params: ModelParams, cst: float) -> "Trajectory":
        data = np.genfromtxt(path, delimiter=",", names=True)
        times = np.asarray(data["t"], dtype=float)
        states = np.column_stack([data[n] for n in ("B_C", "B_PL", "F_L", "F_D", "W", "P_C", "K_r", "lambda")])
        der = _derived_arrays(times, states, params, cst)
        ev = detect_collapse(times, der["pi_r"], states)
        return cls(times=times, states=states, derived=der, cst=cst, params=params,
                   events=[ev] if ev else [])


def _refine_crossing(times, y, i, level):
    """Crossing of ``level`` between samples ``i-1`` and ``i`` from a local cubic spline."""
    a, b = y[i - 1], y[i]
    t_lin = times[i - 1] + (level - a) / (b - a) * (times[i] - times[i - 1])
    lo, hi = max(0, i - 4), min(times.size, i + 4)
    seg = y[lo:hi]
    if hi - lo < 4 or not np.all(np.isfinite(seg)):
        return float(t_lin)
    from scipy.interpolate import CubicSpline
    from scipy.optimize import brentq
    cs = CubicSpline(times[lo:hi], seg)
    f = lambda t: float(cs(t)) - level
    if f(times[i - 1]) * f(times[i]) > 0:
        return float(t_lin)
    return float(brentq(f, times[i - 1], times[i], xtol=1e-12))


def detect_collapse(times, pi_r, states, threshold: float = -1.0, hold: float = 1.0) -> Event | None:
    """Collapse event from sampled data: first downward crossing of ``threshold``
    (linearly interpolated) with the profit rate lower still ``hold`` years later."""
    below = pi_r < threshold
    for i in np.nonzero(below[1:] & ~below[:-1])[0] + 1:
        tc = _refine_crossing(times, pi_r, i, threshold)
        j = np.searchsorted(times, tc + hold)
        if j < times.size and np.all(pi_r[i:j + 1] < threshold) and pi_r[j] < threshold:
            return Event("collapse", float(tc), tuple(states[i]))
    return None


def _derived_arrays(times, states, params, cst, saturate=False):
    cols: dict[str, list] = {k: [] for k in DERIVED_FIELDS}
    for t, y in zip(times, states):
        try:
            d = derived(t, y, params, cst, saturate)
            vals = d.__dict__
        except (DivergenceError, ZeroDivisionError, ValueError):
            vals = {k: math.nan for k in DERIVED_FIELDS}
        for k in DERIVED_FIELDS:
            cols[k].append(vals[k])
    return {k: np.asarray(v, dtype=float) for k, v in cols.items()}


def integrate(p: ModelParams, ic: State | np.ndarray, cst: float,
              cfg: IntegrationConfig = IntegrationConfig(), *,
              wd0: float | None = None,
              extra_events: Sequence[tuple[str, Callable[[float, np.ndarray], float], int]] = (),
              keep_dense: bool = True) -> Trajectory:
    """Integrate the model from ``ic`` over ``cfg.t_span``.

    Built-in events: ``collapse`` (profit rate below ``cfg.collapse_pi`` and
    still falling ``cfg.collapse_hold`` years later), ``lockon`` (growth rate
    first within ``cfg.lockon_tol`` of alpha+beta after having been outside)
    and ``blowup`` (non-finite state, state norm above ``cfg.blowup_norm``
    times the initial norm, or
    a diverging auxiliary exponent), which terminates the run.
    ``extra_events`` are ``(name, fn(t, y), direction)`` triples; a sign change
    of ``fn`` in ``direction`` (+1, -1 or 0) is logged.
    """
    y0 = ic.as_array() if isinstance(ic, State) else np.asarray(ic, dtype=float)[:8].copy()
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial condition must be finite")
    if cfg.nine_state:
        wd = (y0[2] - y0[3] - y0[1] - cst) if wd0 is None else wd0
        y0 = np.append(y0, wd)

    def f(t, y):
        return rhs(t, y, p, cst, cfg.saturate_lending)

    def pi_of(t, y):
        Y_r = y[6] / p.v
        return (y[5] * Y_r - y[4] * Y_r / p.productivity(t) - (p.r_L * y[2] - p.r_D * y[3])) / (p.v * y[5] * Y_r)

    def lock_of(t, y):
        a, b = p.growth_rates(t)
        return abs(p.g_inv(pi_of(t, y)) / p.v - p.delta - a - b) - cfg.lockon_tol

    watchers = [("collapse_candidate", lambda t, y: pi_of(t, y) - cfg.collapse_pi, -1),
                ("lockon", lock_of, -1)]
    watchers += list(extra_events)

    t0, t_end = cfg.t_span
    # threshold scales with the initial size so that long stable-growth runs are not cut off
    blowup_limit = cfg.blowup_norm * max(1.0, float(np.linalg.norm(y0[:8])))
    dense = DenseSolution()
    grid = t0 + cfg.sample_dt * np.arange(int(math.floor((t_end - t0) / cfg.sample_dt + 1e-9)) + 1)
    samples_t: list[float] = [t0]
    samples_y: list[np.ndarray] = [y0.copy()]
    gi = 1
    events: list[Event] = []
    status = "completed"
    collapse_candidate: tuple[float, float] | None = None
    collapse_confirmed_at: float | None = None

    t, y = t0, y0
    try:
        k0 = f(t, y)
    except DivergenceError:
        raise ValueError("auxiliary functions diverge at the initial condition")
    sc0 = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    h = min(cfg.max_step, 0.01 * max(1e-6, np.linalg.norm(y / sc0) / max(np.linalg.norm(k0 / sc0), 1e-12)))
    h = max(h, 1e-6)
    err_prev = 1e-4
    w_prev = [fn(t, y) for _, fn, _ in watchers]

    while t < t_end - 1e-14:
        h = min(h, cfg.max_step, t_end - t)
        if h < H_MIN:
            raise StepSizeUnderflow(f"step size underflow at t={t:.10g}", t, y.copy())
        try:
            y_new, err_vec, K = _step(f, t, y, h, k0)
            ok = np.all(np.isfinite(y_new))
        except DivergenceError:
            ok = False
            y_new = None
        if not ok:
            # shrink towards the singularity; if it persists, flag blowup
            if h <= 1e-6:
                status = "blowup"
                events.append(Event("blowup", t, tuple(y)))
                break
            h *= 0.25
            continue
        sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / sc) ** 2)))
        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
            continue

        Q = K.T @ _P
        dense.append(t, h, y.copy(), Q)
        t_new = t + h

        def interp(tq, _t=t, _h=h, _y=y, _Q=Q):
            th = (tq - _t) / _h
            return _y + _h * (_Q @ np.array([th, th * th, th ** 3, th ** 4]))

        while gi < grid.size and grid[gi] <= t_new + 1e-12:
            samples_t.append(grid[gi])
            samples_y.append(y_new.copy() if abs(grid[gi] - t_new) < 1e-12 else interp(grid[gi]))
            gi += 1

        stop = False
        try:
            w_new = [fn(t_new, y_new) for _, fn, _ in watchers]
        except DivergenceError:
            w_new = list(w_prev)
            status = "blowup"
            events.append(Event("blowup", t_new, tuple(y_new)))
            stop = True
        for j, (name, fn, direction) in enumerate(watchers):
            a_, b_ = w_prev[j], w_new[j]
            crossed = (a_ > 0) != (b_ > 0) and math.isfinite(a_) and math.isfinite(b_)
            if not crossed:
                continue
            up = b_ > a_
            if direction > 0 and not up or direction < 0 and up:
                continue
            try:
                te = _bisect(lambda tq: fn(tq, interp(tq)), t, t_new, a_)
            except DivergenceError:
                te = t_new
            if name == "collapse_candidate":
                if collapse_confirmed_at is None:
                    collapse_candidate = (te, pi_of(te, interp(te)))
                continue
            if name == "lockon" and any(e.name == "lockon" for e in events):
                continue
            events.append(Event(name, te, tuple(interp(te))))

        # collapse confirmation: below threshold and still falling after the hold time
        if collapse_candidate is not None and collapse_confirmed_at is None:
            tc, pic = collapse_candidate
            if w_new[0] > 0:
                collapse_candidate = None
            elif t_new >= tc + cfg.collapse_hold:
                th_ = tc + cfg.collapse_hold
                pi_hold = pi_of(th_, interp(th_)) if th_ >= t else pi_of(t_new, y_new)
                if pi_hold < pic:
                    collapse_confirmed_at = t_new
                    ev_state = dense(tc)
                    events.append(Event("collapse", tc, tuple(ev_state)))
                else:
                    collapse_candidate = None

        if np.linalg.norm(y_new[:8]) > blowup_limit:
            status = "blowup"
            events.append(Event("blowup", t_new, tuple(y_new)))
            stop = True

        t, y, k0, w_prev = t_new, y_new, K[6], w_new
        if stop:
            break
        if cfg.stop_after_collapse is not None and collapse_confirmed_at is not None:
            t_stop = next(e.t for e in events if e.name == "collapse") + cfg.stop_after_collapse
            if t >= t_stop:
                while samples_t and samples_t[-1] > t_stop + 1e-12:
                    samples_t.pop()
                    samples_y.pop()
                status = "collapsed"
                break

        # PI step-size control
        err = max(err, 1e-10)
        fac = _SAFETY * err ** (-_PI_ALPHA) * err_prev ** _PI_BETA
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
        err_prev = err

    times = np.asarray(samples_t)
    states = np.asarray(samples_y)
    if cfg.nine_state:
        # derived quantities use the integrated W_D in the 9-state layout
        der = _derived_arrays(times, states, p, cst, cfg.saturate_lending)
        der["W_D"] = states[:, 8]
        states8 = states[:, :8]
    else:
        der = _derived_arrays(times, states, p, cst, cfg.saturate_lending)
        states8 = states
    traj = Trajectory(times=times, states=states8, derived=der, cst=cst, params=p,
                      events=events, status=status, dense=dense if keep_dense else None)
    if cfg.nine_state:
        traj.w_d_integrated = states[:, 8]
    return traj
