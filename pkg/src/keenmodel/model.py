"""Model definition: parameters, state layout, auxiliary functions and the ODE right-hand side.

State vectors are plain ``numpy`` arrays in the fixed order given by
:data:`STATE_FIELDS`. The 9-state validation layout appends ``W_D``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping

import numpy as np

logger = logging.getLogger(__name__)

STATE_FIELDS = ("B_C", "B_PL", "F_L", "F_D", "W", "P_C", "K_r", "lambda")
STATE_FIELDS_9 = STATE_FIELDS + ("W_D",)
IDX = {name: i for i, name in enumerate(STATE_FIELDS_9)}

# exponent clip for the generalized exponential
EXP_CLIP = 700.0


class ConfigError(ValueError):
    """Invalid model configuration (unknown keys, bad values)."""


class DivergenceError(ArithmeticError):
    """Raised when an auxiliary function's exponent exceeds the overflow guard."""


@dataclass(frozen=True)
class GenExpParams:
    """Parameters of the generalized exponential

    ``G(x) = (y_nu - floor) * exp(slope * (x - x_nu) / (y_nu - floor)) + floor``.
    """

    x_nu: float
    y_nu: float
    slope: float
    floor: float

    def __post_init__(self):
        if self.y_nu == self.floor:
            raise ConfigError("GenExpParams: y_nu must differ from floor")

    def __call__(self, x: float) -> float:
        return gen_exp(x, self)

    @property
    def rate(self) -> float:
        """Coefficient of ``x`` in the exponent."""
        return self.slope / (self.y_nu - self.floor)

    def inverse(self, y: float) -> float:
        """Exact inverse of ``G``; raises ``ValueError`` outside the range."""
        ratio = (y - self.floor) / (self.y_nu - self.floor)
        if not ratio > 0:
            raise ValueError(f"value {y!r} lies outside the range of G (floor {self.floor})")
        return self.x_nu + math.log(ratio) / self.rate

    def derivative(self, x: float) -> float:
        return self.slope * math.exp(self.rate * (x - self.x_nu))

    def limit(self, direction: float) -> float:
        """Limit of G as ``x -> direction * inf``."""
        if self.rate * direction < 0:
            return self.floor
        return math.copysign(math.inf, self.y_nu - self.floor)


def gen_exp(x: float, p: GenExpParams) -> float:
    """Evaluate the generalized exponential ``G(x)``.

    Exponents below ``-700`` saturate to the floor; exponents above ``+700``
    raise :class:`DivergenceError`.
    """
    if not math.isfinite(x):
        raise ValueError(f"gen_exp: non-finite argument {x!r}")
    amp = p.y_nu - p.floor
    z = p.slope * (x - p.x_nu) / amp
    if z < -EXP_CLIP:
        logger.debug("gen_exp: exponent %.3g clipped to floor %g", z, p.floor)
        return p.floor
    if z > EXP_CLIP:
        raise DivergenceError(f"gen_exp: exponent {z:.6g} exceeds {EXP_CLIP}")
    return amp * math.exp(z) + p.floor


INV_STANDARD = GenExpParams(1 / 25, 1 / 25, 2.0, 0.0)
PH_STANDARD = GenExpParams(96 / 100, 0.0, 2.0, -1 / 25)
TAU_RL_STANDARD = GenExpParams(3 / 100, 10.0, 100.0, 3.0)
TAU_LC_STANDARD = GenExpParams(3 / 100, 2.0, -50.0, 1 / 2)


@dataclass(frozen=True)
class GrowthModel:
    """Background growth of productivity and population.

    ``variant`` is ``"exponential"`` (``a = a0 exp(alpha t)``) or
    ``"algebraic"`` (``a = a0 (t0 + alpha t)**nu_g``). The algebraic default
    ``t0 = nu_g`` makes the instantaneous rates equal ``alpha``/``beta`` at t=0.
    """

    variant: str = "exponential"
    t0: float = 2.5
    nu_g: float = 2.5

    def __post_init__(self):
        if self.variant not in ("exponential", "algebraic"):
            raise ConfigError(f"unknown growth variant {self.variant!r}")
        if self.variant == "algebraic" and not self.t0 > 0:
            raise ConfigError("algebraic growth needs t0 > 0")


@dataclass(frozen=True)
class ModelParams:
    """Economic constants, auxiliary-function shapes and growth background.

    Defaults are the standard parameter set (``s = 0.27``, ``v = 3``, ...).
    """

    alpha: float = 0.015
    beta: float = 0.02
    delta: float = 0.01
    omega: float = 0.1
    tau_B: float = 1.0
    tau_W: float = 1 / 26
    tau_Pc: float = 1.0
    s: float = 0.27
    a0: float = 1.0
    v: float = 3.0
    r_L: float = 0.05
    r_D: float = 0.01
    g_inv: GenExpParams = INV_STANDARD
    g_ph: GenExpParams = PH_STANDARD
    g_tau_rl: GenExpParams = TAU_RL_STANDARD
    g_tau_lc: GenExpParams = TAU_LC_STANDARD
    growth: GrowthModel = field(default_factory=GrowthModel)

    def __post_init__(self):
        if not self.v > 0:
            raise ConfigError("v must be positive")
        for name in ("tau_B", "tau_W", "tau_Pc"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.s < 1:
            raise ConfigError("s must lie in (0, 1)")
        if self.r_L == self.r_D:
            raise ConfigError("r_L must differ from r_D")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def is_exponential(self) -> bool:
        return self.growth.variant == "exponential"

    @property
    def has_standard_shapes(self) -> bool:
        return (self.g_inv, self.g_ph, self.g_tau_rl, self.g_tau_lc) == (
            INV_STANDARD, PH_STANDARD, TAU_RL_STANDARD, TAU_LC_STANDARD)

    def productivity(self, t: float) -> float:
        if self.is_exponential:
            return self.a0 * math.exp(self.alpha * t)
        return self.a0 * (self.growth.t0 + self.alpha * t) ** self.growth.nu_g

    def growth_rates(self, t: float) -> tuple[float, float]:
        """Instantaneous productivity and population growth rates at ``t``."""
        if self.is_exponential:
            return self.alpha, self.beta
        g = self.growth
        return (g.nu_g * self.alpha / (g.t0 + self.alpha * t),
                g.nu_g * self.beta / (g.t0 + self.beta * t))


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    B_C: float
    B_PL: float
    F_L: float
    F_D: float
    W: float
    P_C: float
    K_r: float
    lam: float

    @classmethod
    def from_array(cls, y) -> "State":
        return cls(*(float(x) for x in y[:8]))

    def as_array(self) -> np.ndarray:
        return np.array([self.B_C, self.B_PL, self.F_L, self.F_D,
                         self.W, self.P_C, self.K_r, self.lam])


# Initial conditions of the standard run, with W_D(0) = 13 so that cst = 12.
STANDARD_IC = State(B_C=12.0, B_PL=5.0, F_L=100.0, F_D=70.0, W=1.0, P_C=1.0,
                    K_r=900.0, lam=1.0)
STANDARD_WD0 = 13.0


def conserved_constant(ic: State | np.ndarray, wd0: float = STANDARD_WD0) -> float:
    """``cst = F_L - F_D - B_PL - W_D`` at the initial instant."""
    y = ic.as_array() if isinstance(ic, State) else np.asarray(ic)
    return float(y[2] - y[3] - y[1] - wd0)


def reconstruct_wd(state: State | np.ndarray, cst: float) -> float:
    """Worker deposits from the accounting identity ``W_D = F_L - F_D - B_PL - cst``."""
    if isinstance(state, State):
        return state.F_L - state.F_D - state.B_PL - cst
    return state[2] - state[3] - state[1] - cst


def profit_rate(state: State | np.ndarray, t: float, p: ModelParams) -> float:
    """Rate of profit at time ``t``."""
    y = state.as_array() if isinstance(state, State) else state
    B_C, B_PL, F_L, F_D, W, P_C, K_r, lam = y[:8]
    if P_C == 0:
        raise ZeroDivisionError("profit_rate: P_C is zero")
    if K_r == 0:
        raise ZeroDivisionError("profit_rate: K_r is zero")
    Y_r = K_r / p.v
    a = p.productivity(t)
    return (P_C * Y_r - W * Y_r / a - (p.r_L * F_L - p.r_D * F_D)) / (p.v * P_C * Y_r)


@dataclass(frozen=True)
class Derived:
    W_D: float
    pi_r: float
    g: float
    inv: float
    ph: float
    tau_rl: float
    tau_lc: float
    Y_r: float
    a: float


DERIVED_FIELDS = tuple(Derived.__dataclass_fields__)


def _aux(x: float, g: GenExpParams, saturate: bool) -> float:
    try:
        return gen_exp(x, g)
    except DivergenceError:
        if saturate:
            return math.inf
        raise


def derived(t: float, y: np.ndarray, p: ModelParams, cst: float,
            saturate: bool = False) -> Derived:
    """Auxiliary quantities at one instant (``W_D`` from the 9th slot if present)."""
    pi = profit_rate(y, t, p)
    inv = gen_exp(pi, p.g_inv)
    wd = y[8] if len(y) > 8 else reconstruct_wd(y, cst)
    return Derived(W_D=wd, pi_r=pi, g=inv / p.v - p.delta, inv=inv,
                   ph=gen_exp(y[7], p.g_ph), tau_rl=gen_exp(pi, p.g_tau_rl),
                   tau_lc=_aux(pi, p.g_tau_lc, saturate), Y_r=y[6] / p.v,
                   a=p.productivity(t))


def rhs(t: float, y: np.ndarray, p: ModelParams, cst: float,
        saturate: bool = False) -> np.ndarray:
    """Time derivative of the 8-state system (or 9-state if ``len(y) == 9``).

    In the 9-state layout ``W_D`` is integrated explicitly and ``cst`` is
    ignored; otherwise ``W_D`` comes from the accounting identity.

    With ``saturate`` set, a lending time whose exponent overflows is taken
    as infinite (no new lending) instead of raising :class:`DivergenceError`.
    This lets collapse runs continue to their late-time limits.
    """
    B_C, B_PL, F_L, F_D, W, P_C, K_r, lam = y[:8]
    nine = len(y) > 8
    W_D = y[8] if nine else F_L - F_D - B_PL - cst
    alpha_t, beta_t = p.growth_rates(t)
    a = p.productivity(t)
    Y_r = K_r / p.v
    pi = (P_C * Y_r - W * Y_r / a - (p.r_L * F_L - p.r_D * F_D)) / (p.v * P_C * Y_r)
    inv = gen_exp(pi, p.g_inv)
    ph = gen_exp(lam, p.g_ph)
    tau_rl = gen_exp(pi, p.g_tau_rl)
    tau_lc = _aux(pi, p.g_tau_lc, saturate)
    g = inv / p.v - p.delta

    repay = F_L / tau_rl
    lend = B_C / tau_lc
    invest = P_C * Y_r * inv
    wages = Y_r * W / a
    out = [
        repay - lend,
        p.r_L * F_L - p.r_D * F_D - p.r_D * W_D - B_PL / p.tau_B,
        lend - repay + invest,
        p.r_D * F_D - p.r_L * F_L + lend - repay + B_PL / p.tau_B + W_D / p.tau_W - wages + invest,
        (ph + p.omega * (g - (alpha_t + beta_t))
         - (1.0 - W / (a * (1.0 - p.s) * P_C)) / p.tau_Pc) * W,
        -(P_C - W / (a * (1.0 - p.s))) / p.tau_Pc,
        g * K_r,
        (g - (alpha_t + beta_t)) * lam,
    ]
    if nine:
        out.append(wages + p.r_D * W_D - W_D / p.tau_W)
    return np.array(out)


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------

_SCALAR_KEYS = ("alpha", "beta", "delta", "omega", "tau_B", "tau_W", "tau_Pc",
                "s", "a0", "v", "r_L", "r_D")
_G_KEYS = {"inv": "g_inv", "ph": "g_ph", "tau_rl": "g_tau_rl", "tau_lc": "g_tau_lc"}
_GEXP_FIELDS = ("x_nu", "y_nu", "slope", "floor")
_GROWTH_FIELDS = ("variant", "t0", "nu_g")
MODEL_KEYS = frozenset(_SCALAR_KEYS) | {"growth", "G"}


def unknown_keys(d: Mapping[str, Any]) -> list[str]:
    """Dotted names of every key in ``d`` outside the model schema."""
    unknown = [k for k in d if k not in MODEL_KEYS]
    for k in d.get("growth", {}) if isinstance(d.get("growth"), Mapping) else ():
        if k not in _GROWTH_FIELDS:
            unknown.append(f"growth.{k}")
    g = d.get("G", {})
    for name, sub in (g.items() if isinstance(g, Mapping) else ()):
        if name not in _G_KEYS:
            unknown.append(f"G.{name}")
            continue
        unknown += [f"G.{name}.{k}" for k in sub if k not in _GEXP_FIELDS]
    return unknown


def params_from_dict(d: Mapping[str, Any], *, base: ModelParams | None = None,
                     allow_extra: bool = False) -> ModelParams:
    """Build :class:`ModelParams` from a config mapping; absent keys keep defaults.

    Unknown keys raise :class:`ConfigError` listing every offender. With
    ``allow_extra`` unknown top-level keys are ignored (nested ones still raise).
    """
    base = base or ModelParams()
    unknown = unknown_keys(d)
    if allow_extra:
        unknown = [u for u in unknown if "." in u]
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(sorted(unknown)))
    changes: dict[str, Any] = {}
    for k in _SCALAR_KEYS:
        if k in d:
            changes[k] = float(d[k])
    if "growth" in d:
        changes["growth"] = replace(base.growth, **dict(d["growth"]))
    for name, sub in d.get("G", {}).items():
        cur = getattr(base, _G_KEYS[name])
        changes[_G_KEYS[name]] = replace(cur, **{k: float(v) for k, v in sub.items()})
    return replace(base, **changes)


def params_to_dict(p: ModelParams) -> dict[str, Any]:
    d: dict[str, Any] = {k: getattr(p, k) for k in _SCALAR_KEYS}
    d["growth"] = asdict(p.growth)
    d["G"] = {name: asdict(getattr(p, attr)) for name, attr in _G_KEYS.items()}
    return d
