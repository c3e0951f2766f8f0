"""Parameter sweeps, bifurcation location and the two-parameter regime diagram."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from .leading import classify
from .model import ModelParams
from .parallel import pmap

SWEEP_PARAMS = ("tau_B", "tau_W", "r_L", "tau_Pc", "r_D", "s", "v", "alpha", "delta", "beta")
BORDER_NAMES = ("stability", "price_neutral", "wage_neutral", "fd_zero")
IM_TOL = 1e-9


@dataclass(frozen=True)
class PointResult:
    """Classification summary at one parameter point (``ok`` False on failure)."""

    value: float
    ok: bool
    regime: str = ""
    mu0: complex = complex(math.nan, math.nan)
    roots: tuple = ()
    T: float = math.nan
    realizable: bool = False
    fd0_re: float = math.nan
    error: str = ""


def _point(p: ModelParams, name: str, value: float) -> PointResult:
    try:
        q = p.with_(**{name: value})
        m = classify(q)
    except (ValueError, ArithmeticError) as exc:
        return PointResult(value=value, ok=False, error=str(exc))
    fd = m.amplitudes["F_D"].real if m.amplitudes is not None else math.nan
    return PointResult(value=value, ok=True, regime=m.regime.value, mu0=m.mu0, roots=m.all_roots,
                       T=m.T, realizable=m.realizable, fd0_re=fd)


def _is_complex(mu0: complex) -> bool:
    return abs(mu0.imag) > IM_TOL


@dataclass
class Sweep:
    name: str
    factors: np.ndarray
    points: list[PointResult]
    im_changes: list[int] = field(default_factory=list)
    re_changes: list[int] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([pt.value for pt in self.points])


def sweep_1d(p: ModelParams, name: str, factors: Sequence[float] | None = None, n: int = 41,
             jobs: int = 1) -> Sweep:
    """Classify at ``p.name * factor`` for a geometric grid of factors on [1/4, 4].

    ``im_changes``/``re_changes`` hold indices ``i`` where the indicator
    differs between points ``i`` and ``i + 1``. Failed points are flagged and
    skipped when comparing neighbors.
    """
    if name not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
    factors = np.geomspace(0.25, 4.0, n) if factors is None else np.asarray(factors, dtype=float)
    base = getattr(p, name)
    pts = pmap(partial(_point, p, name), [float(base * f) for f in factors], jobs)
    sw = Sweep(name=name, factors=factors, points=pts)
    ok = [i for i, pt in enumerate(pts) if pt.ok]
    for i, j in zip(ok, ok[1:]):
        if _is_complex(pts[i].mu0) != _is_complex(pts[j].mu0):
            sw.im_changes.append(i)
        if (pts[i].mu0.real > 0) != (pts[j].mu0.real > 0):
            sw.re_changes.append(i)
    return sw


def _stable_indicator(p: ModelParams, name: str, x: float) -> bool:
    return _is_complex(classify(p.with_(**{name: x})).mu0)


def find_bifurcation(p: ModelParams, name: str, bracket: tuple[float, float],
                     rel_width: float = 1e-7) -> float:
    """Parameter value where the dominant root turns from complex to real (or back).

    Bisection on ``Im(mu0) != 0`` until the bracket is narrower than
    ``rel_width`` relative to its midpoint.
    """
    a, b = map(float, bracket)
    fa, fb = _stable_indicator(p, name, a), _stable_indicator(p, name, b)
    if fa == fb:
        raise ValueError(f"no change of oscillatory character for {name} in [{a}, {b}]")
    while b - a > rel_width * abs(0.5 * (a + b)):
        m = 0.5 * (a + b)
        fm = _stable_indicator(p, name, m)
        if fm == fa:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


@dataclass(frozen=True)
class GridRecord:
    s: float
    v: float
    ok: bool
    regime: str
    re_mu0: float
    im_mu0: float
    T: float
    realizable: bool
    fd0_re: float
    borders: frozenset = frozenset()


def _cell(p: ModelParams, sv: tuple[float, float]) -> GridRecord:
    s, v = sv
    try:
        m = classify(p.with_(s=s, v=v))
    except (ValueError, ArithmeticError):
        return GridRecord(s, v, False, "failed", math.nan, math.nan, math.nan, False, math.nan)
    fd = m.amplitudes["F_D"].real if m.amplitudes is not None else math.nan
    return GridRecord(s, v, True, m.regime.value, m.mu0.real, m.mu0.imag, m.T, m.realizable, fd)


def _indicators(r: GridRecord, p: ModelParams) -> dict[str, bool]:
    return {"stability": abs(r.im_mu0) > IM_TOL,
            "price_neutral": r.re_mu0 - p.alpha - p.beta > 0,
            "wage_neutral": r.re_mu0 - p.beta > 0,
            "fd_zero": r.fd0_re > 0}


@dataclass
class RegimeGrid:
    s_values: np.ndarray
    v_values: np.ndarray
    records: list[GridRecord]  # row-major: v outer, s inner

    def at(self, i_v: int, i_s: int) -> GridRecord:
        return self.records[i_v * self.s_values.size + i_s]

    def regimes(self) -> np.ndarray:
        return np.array([r.regime for r in self.records]).reshape(self.v_values.size, self.s_values.size)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "v", "regime", "re_mu0", "im_mu0", "T", "realizable", "border_flags"])
            for r in self.records:
                w.writerow([f"{r.s:.17g}", f"{r.v:.17g}", r.regime, f"{r.re_mu0:.17g}",
                            f"{r.im_mu0:.17g}", f"{r.T:.17g}", int(r.realizable),
                            "|".join(sorted(r.borders))])
        return path


def regime_grid(p: ModelParams, s_range=(0.0675, 1.0), v_range=(0.75, 12.0), ns: int = 41,
                nv: int = 41, jobs: int = 1, log: bool = True) -> RegimeGrid:
    """Classify every cell of an (s, v) grid and flag border crossings.

    A cell carries a border flag when the indicator differs from its right or
    upper neighbor. Values of ``s`` at or above 1 are excluded.
    """
    spacing = np.geomspace if log else np.linspace
    s_vals = spacing(*s_range, ns)
    s_vals = s_vals[s_vals < 1.0]
    v_vals = spacing(*v_range, nv)
    cells = [(float(s), float(v)) for v in v_vals for s in s_vals]
    recs = pmap(partial(_cell, p), cells, jobs)
    ns_ = s_vals.size
    ind = [_indicators(r, p) if r.ok else None for r in recs]
    out = []
    for k, r in enumerate(recs):
        flags = set()
        i_v, i_s = divmod(k, ns_)
        nbrs = []
        if i_s + 1 < ns_:
            nbrs.append(k + 1)
        if i_v + 1 < v_vals.size:
            nbrs.append(k + ns_)
        if ind[k] is not None:
            for j in nbrs:
                if ind[j] is None:
                    continue
                for b in BORDER_NAMES:
                    if ind[k][b] != ind[j][b]:
                        flags.add(b)
        out.append(GridRecord(**{**r.__dict__, "borders": frozenset(flags)}))
    return RegimeGrid(s_values=s_vals, v_values=v_vals, records=out)


def stability_border(p: ModelParams, v_values: Sequence[float], s_bracket=(0.05, 0.99),
                     n_probe: int = 40) -> np.ndarray:
    """Critical ``s`` at each ``v`` (NaN when no crossing is found in ``s_bracket``).

    The lowest change of oscillatory character on a probe grid is refined by
    bisection.
    """
    out = []
    for v in v_values:
        q = p.with_(v=float(v))
        probes = np.linspace(*s_bracket, n_probe)
        flags = []
        for s in probes:
            try:
                flags.append(_stable_indicator(q, "s", float(s)))
            except (ValueError, ArithmeticError):
                flags.append(None)
        crit = math.nan
        for i in range(n_probe - 1):
            if flags[i] is True and flags[i + 1] is False:
                crit = find_bifurcation(q, "s", (probes[i], probes[i + 1]))
                break
        out.append(crit)
    return np.array(out)


def fit_power_law(v, s_crit) -> tuple[float, float]:
    """``s_crit = c * v**k`` by log regression; returns ``(c, k)``."""
    m = np.isfinite(s_crit)
    k, lc = np.polyfit(np.log(np.asarray(v)[m]), np.log(np.asarray(s_crit)[m]), 1)
    return float(np.exp(lc)), float(k)
