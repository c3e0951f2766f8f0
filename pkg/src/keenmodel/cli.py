"""Command-line front end: ``python -m keenmodel <command> [options]``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
numerical failures (the message names the failing stage).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from . import __version__
from .integrator import IntegrationConfig, StepSizeUnderflow, Trajectory, integrate
from .model import (MODEL_KEYS, STANDARD_IC, STANDARD_WD0, STATE_FIELDS, ConfigError,
                    ModelParams, State, conserved_constant, params_from_dict,
                    unknown_keys)

logger = logging.getLogger("keenmodel")

COMMANDS = ("simulate", "classify", "quintic", "amplitudes", "modes", "collapse-fit", "sweep1d",
            "regime2d", "mc-ic", "mc-params", "branch-switch", "separatrix", "ratio")

# options accepted inside each per-command config block
COMMAND_OPTIONS: dict[str, set[str]] = {
    "simulate": {"t_end"},
    "classify": set(),
    "quintic": set(),
    "amplitudes": set(),
    "modes": {"kr0"},
    "collapse-fit": {"t_end", "window", "reference_window", "trajectory"},
    "sweep1d": {"param", "n"},
    "regime2d": {"s_range", "v_range", "ns", "nv"},
    "mc-ic": {"n", "sigma", "window", "sample_t"},
    "mc-params": {"n", "sigma"},
    "branch-switch": {"before", "after", "t_switch", "horizon"},
    "separatrix": {"before", "after", "bracket", "horizon"},
    "ratio": {"t_end", "numerator", "denominator", "window", "trajectory"},
}
INTEGRATION_KEYS = {"rel_tol", "abs_tol", "max_step", "sample_dt", "blowup_norm", "nine_state",
                    "saturate_lending"}
IC_KEYS = set(STATE_FIELDS) | {"W_D"}
TOP_LEVEL = set(MODEL_KEYS) | {"ic", "integration"} | set(COMMANDS)


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"numerical failure in stage '{stage}': {exc}")
        self.stage = stage


@dataclass
class Context:
    command: str
    params: ModelParams
    ic: State
    wd0: float
    integration: dict
    options: dict
    out: Path
    fmt: str
    seed: int
    plot: bool
    jobs: int
    config_path: str | None
    outputs: list[str] = field(default_factory=list)

    @property
    def cst(self) -> float:
        return conserved_constant(self.ic, self.wd0)

    def cfg(self, t_end: float, **kw) -> IntegrationConfig:
        return IntegrationConfig(t_span=(0.0, float(t_end)), **{**self.integration, **kw})

    def opt(self, key: str, default=None):
        return self.options.get(key, default)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(str(p))
        return p


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(path: str | None, command: str) -> tuple[ModelParams, State, float, dict, dict]:
    if path is None:
        return ModelParams(), STANDARD_IC, STANDARD_WD0, {}, {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    model = {k: v for k, v in doc.items() if k in MODEL_KEYS}
    unknown = sorted(k for k in doc if k not in TOP_LEVEL) + unknown_keys(model)
    ic_doc = doc.get("ic", {})
    unknown += [f"ic.{k}" for k in ic_doc if k not in IC_KEYS]
    integ = doc.get("integration", {})
    unknown += [f"integration.{k}" for k in integ if k not in INTEGRATION_KEYS]
    for cmd in COMMANDS:
        unknown += [f"{cmd}.{k}" for k in doc.get(cmd, {}) if k not in COMMAND_OPTIONS[cmd]]
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(unknown))
    params = params_from_dict(model)
    base = STANDARD_IC.__dict__.copy()
    for k, v in ic_doc.items():
        if k != "W_D":
            base["lam" if k == "lambda" else k] = float(v)
    ic = State(**base)
    wd0 = float(ic_doc.get("W_D", STANDARD_WD0))
    return params, ic, wd0, dict(integ), dict(doc.get(command, {}))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _num(x):
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _num(x.real), "im": _num(x.imag)}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("Infinity" if x > 0 else "-Infinity" if x < 0 else "NaN")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in x]
    return x


def write_json(ctx: Context, name: str, obj) -> Path:
    p = ctx.path(name)
    p.write_text(json.dumps(_num(obj), indent=2, sort_keys=True) + "\n")
    return p


def write_rows(ctx: Context, stem: str, header: list[str], rows: list[list]) -> Path:
    """Rows as CSV (17 significant digits) or as a JSON list of records."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.17g}"
        return str(v)

    if ctx.fmt == "json":
        return write_json(ctx, stem + ".json", [dict(zip(header, r)) for r in rows])
    p = ctx.path(stem + ".csv")
    with p.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")
    return p


def write_trajectory(ctx: Context, tr: Trajectory, stem: str = "trajectory") -> Path:
    if ctx.fmt == "csv":
        return tr.to_csv(ctx.path(stem + ".csv"))
    rows = [[tr.times[i], *tr.states[i, :4], tr.derived["W_D"][i], *tr.states[i, 4:],
             tr.derived["pi_r"][i], tr.derived["g"][i]] for i in range(len(tr))]
    return write_rows(ctx, stem, list(Trajectory.CSV_HEADER), rows)


def _savefig(ctx: Context, fig, name: str):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "keenmodel"
    fig.savefig(ctx.path(name), format="svg", metadata={"Date": None, "Creator": None})
    import matplotlib.pyplot as plt
    plt.close(fig)


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _load_or_simulate(ctx: Context, t_end: float) -> Trajectory:
    src = ctx.opt("trajectory")
    if src:
        return Trajectory.from_csv(src, ctx.params, ctx.cst)
    with stage("integrate"):
        return integrate(ctx.params, ctx.ic, ctx.cst, ctx.cfg(t_end))


class stage:
    """Context manager tagging numerical exceptions with a stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, ev, tb):
        if ev is not None and isinstance(ev, (ArithmeticError, StepSizeUnderflow, ValueError)) \
                and not isinstance(ev, (ConfigError, StageError)):
            raise StageError(self.name, ev) from ev
        return False


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(ctx: Context):
    with stage("integrate"):
        tr = integrate(ctx.params, ctx.ic, ctx.cst, ctx.cfg(ctx.opt("t_end", 150.0)))
    write_trajectory(ctx, tr)
    write_json(ctx, "events.json", {"status": tr.status, "cst": tr.cst,
                                    "events": [{"name": e.name, "t": e.t} for e in tr.events]})
    if ctx.plot:
        plt = _plt()
        fig, ax = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        for name in ("B_C", "F_L", "F_D", "K_r"):
            y = tr[name]
            ax[0].semilogy(tr.times, np.where(y > 0, y, np.nan), label=name)
        ax[0].legend()
        ax[1].plot(tr.times, tr["lambda"], label="lambda")
        ax[1].plot(tr.times, tr["pi_r"], label="pi_r")
        ax[1].set_ylim(-0.5, 1.5)
        ax[1].legend()
        ax[1].set_xlabel("t (years)")
        _savefig(ctx, fig, "trajectory.svg")


def cmd_classify(ctx: Context):
    from .leading import classify
    with stage("classify"):
        m = classify(ctx.params)
    write_json(ctx, "classify.json", m.to_dict())
    if ctx.plot:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 4))
        r = np.array(m.all_roots)
        ax.plot(r.real, r.imag, "o")
        ax.axvline(0, color="k", lw=0.5)
        ax.set_xlabel("Re mu")
        ax.set_ylabel("Im mu")
        _savefig(ctx, fig, "roots.svg")


def cmd_quintic(ctx: Context):
    from .leading import char_quintic
    with stage("quintic"):
        q = char_quintic(ctx.params)
        roots = q.roots()
    write_json(ctx, "quintic.json", {"coefficients": list(q.coefficients),
                                     "node_residual": q.node_residual,
                                     "roots": [complex(r) for r in roots]})


def cmd_amplitudes(ctx: Context):
    from .leading import classify
    with stage("amplitudes"):
        m = classify(ctx.params)
        if m.amplitudes is None:
            raise ArithmeticError("amplitude system could not be solved")
    tab = m.amplitudes
    ph = tab.phase_years
    rows = [[k, z.real, z.imag, abs(z), ph[k]] for k, z in tab.coefficients.items()]
    write_rows(ctx, "amplitudes", ["field", "re", "im", "amp", "phase_years"], rows)
    write_json(ctx, "periods.json", {"mu0": m.mu0, "T": m.T, "T_star": m.T_star,
                                     "realizable": tab.realizable})


def cmd_modes(ctx: Context):
    from .modal import mode_spectrum
    with stage("modes"):
        sp = mode_spectrum(ctx.params, kr0=float(ctx.opt("kr0", 1.0)))
    write_json(ctx, "modes.json", sp.to_dict())


def cmd_collapse_fit(ctx: Context):
    from .collapse import fit_collapse, transition_detect
    from .leading import RegimeClass, classify
    tr = _load_or_simulate(ctx, ctx.opt("t_end", 160.0))
    with stage("collapse-fit"):
        win = ctx.opt("window")
        fit = fit_collapse(tr, ctx.params, tuple(win) if win else None)
    out = fit.to_dict()
    with stage("transition"):
        mode = classify(ctx.params)
        if mode.regime is RegimeClass.DEFERRED_COLLAPSE:
            ref = tuple(ctx.opt("reference_window", (70.0, 100.0)))
            out["onset_t"], out["transient_rate"] = transition_detect(tr, mode, ref)
    write_json(ctx, "collapse_fit.json", out)


def cmd_sweep1d(ctx: Context):
    from .scans import sweep_1d
    name = ctx.opt("param", "s")
    with stage("sweep1d"):
        sw = sweep_1d(ctx.params, name, n=int(ctx.opt("n", 41)), jobs=ctx.jobs)
    rows = []
    for f, pt in zip(sw.factors, sw.points):
        rows.append([f, pt.value, pt.regime if pt.ok else "failed", pt.mu0.real, pt.mu0.imag,
                     pt.T, int(pt.realizable)])
    write_rows(ctx, "sweep1d", ["factor", name, "regime", "re_mu0", "im_mu0", "T", "realizable"], rows)
    write_json(ctx, "sweep1d_markers.json", {
        "param": name,
        "im_changes": [[sw.points[i].value, sw.points[i + 1].value] for i in sw.im_changes],
        "re_changes": [[sw.points[i].value, sw.points[i + 1].value] for i in sw.re_changes]})
    if ctx.plot:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(6, 4))
        for pt in sw.points:
            if pt.ok:
                r = np.array(pt.roots)
                ax.semilogx([pt.value] * r.size, r.real, ".", color="k", ms=2)
        ax.axhline(0, lw=0.5)
        ax.set_xlabel(name)
        ax.set_ylabel("Re mu")
        ax.set_ylim(-1.5, 0.5)
        _savefig(ctx, fig, "sweep1d.svg")


def cmd_regime2d(ctx: Context):
    from .scans import regime_grid
    with stage("regime2d"):
        g = regime_grid(ctx.params, tuple(ctx.opt("s_range", (0.0675, 1.0))),
                        tuple(ctx.opt("v_range", (0.75, 12.0))), int(ctx.opt("ns", 41)),
                        int(ctx.opt("nv", 41)), jobs=ctx.jobs)
    if ctx.fmt == "csv":
        g.write_csv(ctx.path("regime2d.csv"))
    else:
        rows = [[r.s, r.v, r.regime, r.re_mu0, r.im_mu0, r.T, int(r.realizable),
                 "|".join(sorted(r.borders))] for r in g.records]
        write_rows(ctx, "regime2d", ["s", "v", "regime", "re_mu0", "im_mu0", "T", "realizable",
                                     "border_flags"], rows)
    if ctx.plot:
        plt = _plt()
        codes = {"StableGrowth": 2, "DeferredCollapse": 1, "ImmediateCollapse": 0, "Degenerate": 1.5,
                 "failed": np.nan}
        Z = np.vectorize(codes.get)(g.regimes()).astype(float)
        fig, ax = plt.subplots(figsize=(6, 5))
        ax.pcolormesh(g.s_values, g.v_values, Z, cmap="Greys", shading="nearest")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("s")
        ax.set_ylabel("v")
        _savefig(ctx, fig, "regime2d.svg")


def cmd_mc_ic(ctx: Context):
    from .experiments import monte_carlo_ic
    with stage("mc-ic"):
        s = monte_carlo_ic(ctx.params, sigma=float(ctx.opt("sigma", 0.01)), n=int(ctx.opt("n", 100)),
                           seed=ctx.seed, window=tuple(ctx.opt("window", (60.0, 90.0))),
                           ic=ctx.ic, sample_t=float(ctx.opt("sample_t", 120.0)), jobs=ctx.jobs)
    _write_mc(ctx, s, "mc_ic")


def cmd_mc_params(ctx: Context):
    from .experiments import monte_carlo_params
    with stage("mc-params"):
        s = monte_carlo_params(ctx.params, sigma=float(ctx.opt("sigma", 0.10)),
                               n=int(ctx.opt("n", 1000)), seed=ctx.seed, jobs=ctx.jobs)
    _write_mc(ctx, s, "mc_params")


def _write_mc(ctx: Context, s, stem: str):
    cols = [k for k, v in s.extra.items() if len(v) == s.n]
    rows = [[i, s.values[i], s.outcomes[i], *[s.extra[c][i] for c in cols]] for i in range(s.n)]
    write_rows(ctx, stem, ["run", s.kind, "outcome", *cols], rows)
    write_json(ctx, stem + "_summary.json", s.summary_dict())
    if ctx.plot and s.n_valid:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.hist(s.valid, bins=20, color="0.6")
        ax.set_xlabel(s.kind)
        _savefig(ctx, fig, stem + ".svg")


def _switch_params(ctx: Context):
    before = params_from_dict(ctx.opt("before", {"v": 2.9}), base=ctx.params)
    after = params_from_dict(ctx.opt("after", {"v": 2.7263}), base=ctx.params)
    return before, after


def cmd_branch_switch(ctx: Context):
    from .experiments import branch_switch
    before, after = _switch_params(ctx)
    with stage("branch-switch"):
        o = branch_switch(before, after, float(ctx.opt("t_switch", 94.16736)), ctx.ic, ctx.cst,
                          float(ctx.opt("horizon", 250.0)),
                          IntegrationConfig(**ctx.integration))
    write_trajectory(ctx, o.trajectory)
    write_json(ctx, "branch_switch.json", {"outcome": o.outcome, "late_rate": o.late_rate,
                                           "mu0_after": o.mu0_after,
                                           "events": [{"name": e.name, "t": e.t}
                                                      for e in o.trajectory.events]})


def cmd_separatrix(ctx: Context):
    from .experiments import separatrix_search
    before, after = _switch_params(ctx)
    with stage("separatrix"):
        r = separatrix_search(before, after, tuple(ctx.opt("bracket", (94.16736, 94.16748))),
                              ctx.ic, ctx.cst, float(ctx.opt("horizon", 250.0)))
    write_json(ctx, "separatrix.json", r.__dict__)


def cmd_ratio(ctx: Context):
    from .experiments import ratio_diagnostic
    from .leading import classify
    tr = _load_or_simulate(ctx, ctx.opt("t_end", 150.0))
    with stage("ratio"):
        m = classify(ctx.params)
        if m.amplitudes is None:
            raise ArithmeticError("amplitude system could not be solved")
        r = ratio_diagnostic(tr, m.amplitudes, ctx.opt("numerator", "F_L"),
                             ctx.opt("denominator", "F_D"))
    win = tuple(ctx.opt("window", (60.0, 115.0)))
    dev, raw_dev = r.max_deviation(win)
    write_rows(ctx, "ratio", ["t", "ratio", "raw"],
               [[t, a, b] for t, a, b in zip(r.times, r.ratio, r.raw)])
    write_json(ctx, "ratio_summary.json", {"lag": r.lag, "predicted": r.predicted, "window": win,
                                           "max_deviation": dev, "max_raw_deviation": raw_dev})
    if ctx.plot:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(r.times, r.ratio, label="lagged")
        ax.plot(r.times, r.raw, label="raw")
        ax.set_ylim(0.98, 1.02)
        ax.legend()
        _savefig(ctx, fig, "ratio.svg")


HELP = {
    "simulate": "integrate the model and write the trajectory",
    "classify": "dominant growth mode, regime and periods",
    "quintic": "characteristic polynomial coefficients and roots",
    "amplitudes": "scale coefficients, amplitudes and phase-years",
    "modes": "second-order mode spectrum (stable growth only)",
    "collapse-fit": "fit the terminal-collapse forms and the transition",
    "sweep1d": "one-parameter sweep over factors 1/4..4",
    "regime2d": "(s, v) regime diagram",
    "mc-ic": "Monte Carlo over perturbed initial conditions",
    "mc-params": "Monte Carlo over perturbed parameters",
    "branch-switch": "switch parameters mid-run and classify the outcome",
    "separatrix": "bisect the switch time between growth and collapse",
    "ratio": "phase-lagged ratio of two fields",
}

HANDLERS = {
    "simulate": cmd_simulate, "classify": cmd_classify, "quintic": cmd_quintic,
    "amplitudes": cmd_amplitudes, "modes": cmd_modes, "collapse-fit": cmd_collapse_fit,
    "sweep1d": cmd_sweep1d, "regime2d": cmd_regime2d, "mc-ic": cmd_mc_ic,
    "mc-params": cmd_mc_params, "branch-switch": cmd_branch_switch,
    "separatrix": cmd_separatrix, "ratio": cmd_ratio,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default: $KEEN_JOBS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="keenmodel", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return p


def main(argv=None) -> int:
    from .parallel import resolve_jobs

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        params, ic, wd0, integ, opts = load_config(args.config, args.command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(command=args.command, params=params, ic=ic, wd0=wd0, integration=integ,
                      options=opts, out=out, fmt=args.format, seed=args.seed, plot=args.plot,
                      jobs=resolve_jobs(args.jobs), config_path=args.config)
        start = time.time()
        HANDLERS[args.command](ctx)
        manifest = {"command": args.command, "config": args.config, "seed": args.seed,
                    "outputs": ctx.outputs, "version": __version__,
                    "wall_clock_s": round(time.time() - start, 3),
                    "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(start))}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return 0
    except (UsageError, ConfigError) as exc:
        print(f"keenmodel: error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"keenmodel: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, StepSizeUnderflow) as exc:
        print(f"keenmodel: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
