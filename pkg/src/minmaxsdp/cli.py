"""Command-line entry point: ``python -m minmaxsdp <command> <problem.json> [options]``.

Exit codes: 0 optimal or certified, 2 converged without a certificate,
3 solver failure, 4 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import finite_games, mrf, polygame, sdpgate
from .absorbing import AbsorbingGameError, auxiliary_game, value_search
from .atomreco import AtomicMeasure
from .polygame import GameInputError, solve_game
from .problem_io import COMMANDS, InputError, load_json, parse_problem

EXIT_OK, EXIT_UNCERTIFIED, EXIT_FAILURE, EXIT_INPUT = 0, 2, 3, 4
MRF_COMMANDS = ("solve-mrf", "solve-nash", "solve-minmax", "solve-loomis", "solve-absorbing-finite")


@dataclass
class RunConfig:
    command: str
    path: str
    order: int | None = None
    max_order: int | None = None
    tol: float = 1e-8
    rank_tol: float = 1e-6
    perturb: float | None = None
    format: str = "text"
    seed: int = 0
    player: int = 0
    export_sdp: str | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if not 0 < self.tol < 1:
            raise InputError(f"--tol must lie in (0, 1), got {self.tol}")
        if not 0 < self.rank_tol < 1:
            raise InputError(f"--rank-tol must lie in (0, 1), got {self.rank_tol}")
        for name in ("order", "max_order"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise InputError(f"--{name.replace('_', '-')} must be at least 1, got {v}")
        if self.order is not None and self.max_order is not None and self.max_order < self.order:
            raise InputError(f"--max-order {self.max_order} is below --order {self.order}")
        if self.perturb is not None:
            if self.perturb < 0:
                raise InputError("--perturb must be non-negative")
            if self.command not in MRF_COMMANDS:
                raise InputError("--perturb applies to the MRF-based commands only")
        if self.format not in ("text", "machine"):
            raise InputError(f"--format must be text or machine, got {self.format!r}")


@dataclass
class RunReport:
    config: dict
    status: str
    exit_code: int
    result: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)     # text output only

    def machine(self) -> str:
        return emit_machine({"config": self.config, "status": self.status,
                             "exit_code": self.exit_code, "result": self.result})


# ---------------------------------------------------------------------------
# serialization


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def emit_machine(data: dict) -> str:
    return json.dumps(jsonable(data), sort_keys=True, indent=1) + "\n"


def parse_machine(text: str) -> dict:
    return json.loads(text)


def _measure(mu: AtomicMeasure | None):
    if mu is None:
        return None
    mu = mu.sorted()
    return {"atoms": mu.atoms, "weights": mu.weights}


def _moments(y):
    if y is None:
        return None
    return {"nvars": y.nvars, "order": y.order, "values": y.values}


# ---------------------------------------------------------------------------
# runners


def _hierarchy_opts(cfg: RunConfig) -> dict:
    opts = dict(tol=cfg.tol, rank_tol=cfg.rank_tol, seed=cfg.seed, perturb=cfg.perturb)
    if cfg.order is not None:
        opts["r_start"] = cfg.order
        opts["r_max"] = cfg.order if cfg.max_order is None else cfg.max_order
    elif cfg.max_order is not None:
        opts["r_max"] = cfg.max_order
    return opts


def _hierarchy_result(rep: mrf.HierarchyReport) -> tuple[dict, dict]:
    orders = [{"order": o.order, "value": o.value, "status": o.status, "method": o.method,
               "rank_full": o.rank_full, "rank_low": o.rank_low, "flat": o.flat,
               "flat_degree": o.flat_degree, "accuracy": o.accuracy} for o in rep.orders]
    res = {"value": rep.value, "hierarchy_status": rep.status, "orders": orders,
           "minimizers": _measure(rep.minimizers), "first_moment_point": rep.first_moment_point,
           "moments": _moments(rep.moments), "messages": rep.messages}
    return res, {f"order {o.order}": o.seconds for o in rep.orders}


def _hierarchy_exit(status: str) -> int:
    return {"certified": EXIT_OK, "converged": EXIT_UNCERTIFIED,
            "max-order": EXIT_UNCERTIFIED}.get(status, EXIT_FAILURE)


def _export_hierarchy(rep: mrf.HierarchyReport, cfg: RunConfig) -> None:
    r = rep.orders[-1].order
    L = rep.lifted
    pert = mrf.random_perturbation(L.nvars, 2 * L.r0, cfg.perturb, cfg.seed) if cfg.perturb else None
    sdpgate.export_sdpa(mrf.build_relaxation(L, r, pert).sdp, cfg.export_sdp)


def _run_mrf(problem, cfg: RunConfig):
    prob, bounds = problem
    opts = _hierarchy_opts(cfg)
    rep = mrf.solve_hierarchy(prob, bounds=bounds if bounds is not None else "interval"
                              if prob.K.box is not None or not prob.branches else "relaxation", **opts)
    res, times = _hierarchy_result(rep)
    if cfg.export_sdp:
        _export_hierarchy(rep, cfg)
    return rep.status, _hierarchy_exit(rep.status), res, times


def _game_result(rep: finite_games.GameReport, extra: dict | None = None):
    res, times = _hierarchy_result(rep.hierarchy)
    res.update({"value": rep.value, "scale": rep.scale,
                "profiles": [[p for p in prof] for prof in rep.profiles],
                "residuals": rep.residuals, "first_moment_profile": rep.first_moment_profile})
    res.update(extra or {})
    return res, times


def _run_finite(problem, cfg: RunConfig):
    opts = _hierarchy_opts(cfg)
    extra = {}
    if cfg.command == "solve-nash":
        rep = finite_games.solve_nash(problem, **opts)
    elif cfg.command == "solve-minmax":
        if not 0 <= cfg.player < problem.players:
            raise InputError(f"--player must be in 0..{problem.players - 1}")
        rep = finite_games.solve_minmax(problem, cfg.player, **opts)
        extra["player"] = cfg.player
    elif cfg.command == "solve-loomis":
        rep = finite_games.solve_loomis(problem, **opts)
    else:
        rep = finite_games.solve_absorbing_finite(problem, **opts)
        extra["discount"] = problem.discount
    res, times = _game_result(rep, extra)
    if cfg.export_sdp:
        _export_hierarchy(rep.hierarchy, cfg)
    return rep.status, _hierarchy_exit(rep.status), res, times


def _poly_opts(cfg: RunConfig) -> dict:
    opts = dict(tol=cfg.tol, rank_tol=cfg.rank_tol, seed=cfg.seed)
    if cfg.order is not None:
        opts["d_start"] = cfg.order
        opts["d_max"] = cfg.order if cfg.max_order is None else cfg.max_order
    elif cfg.max_order is not None:
        opts["d_max"] = cfg.max_order
    return opts


def _poly_result(rep: polygame.GameSolveReport) -> tuple[dict, dict]:
    orders = [{"order": o.order, "upper": o.upper, "lower": o.lower,
               "primal_status": o.primal_status, "dual_status": o.dual_status,
               "rank1": o.rank1, "rank2": o.rank2, "accuracy": o.accuracy} for o in rep.orders]
    last = rep.orders[-1] if rep.orders else None
    res = {"value": rep.value, "lower": rep.lower, "upper": rep.upper, "certified": rep.certified,
           "orders": orders, "strategy1": _measure(rep.strategy1), "strategy2": _measure(rep.strategy2),
           "checks": rep.checks, "messages": rep.messages,
           "moments1": _moments(last.moments1 if last else None),
           "moments2": _moments(last.moments2 if last else None)}
    return res, {f"order {o.order}": o.seconds for o in rep.orders}


def _poly_exit(status: str) -> int:
    return {"certified": EXIT_OK, "bracket": EXIT_UNCERTIFIED}.get(status, EXIT_FAILURE)


def _run_zerosum(G, cfg: RunConfig):
    rep = solve_game(G, **_poly_opts(cfg))
    res, times = _poly_result(rep)
    if cfg.export_sdp and rep.orders:
        sdpgate.export_sdpa(polygame.build_primal(polygame._min_orientation(G), rep.orders[-1].order),
                            cfg.export_sdp)
    return rep.status, _poly_exit(rep.status), res, times


def _run_absorbing_poly(A, cfg: RunConfig):
    opts = dict(tol=cfg.tol, rank_tol=cfg.rank_tol, seed=cfg.seed)
    if cfg.max_order is not None:
        opts["d_max"] = cfg.max_order
    try:
        tr = value_search(A, **opts)
    except AbsorbingGameError as exc:
        return "failed", EXIT_FAILURE, {"messages": [str(exc)]}, {}
    all_cert = all(r.certified for r in tr.reports)
    status = "certified" if tr.converged and all_cert else "converged" if tr.converged else "failed"
    code = EXIT_OK if status == "certified" else EXIT_UNCERTIFIED if status == "converged" else EXIT_FAILURE
    final, times = _poly_result(tr.reports[-1])
    res = {"value": tr.value, "discount": A.discount, "bracket": list(tr.bracket),
           "evaluations": [list(e) for e in tr.evaluations], "order": tr.order,
           "bisections": tr.bisections, "converged": tr.converged,
           "all_evaluations_certified": all_cert, "monotone": tr.monotone(cfg.tol),
           "final_game": final}
    if cfg.export_sdp:
        Gt = polygame._min_orientation(auxiliary_game(A, tr.evaluations[-1][0]))
        sdpgate.export_sdpa(polygame.build_primal(Gt, tr.reports[-1].orders[-1].order), cfg.export_sdp)
    return status, code, res, {"value search": sum(times.values())}


_RUNNERS = {
    "solve-mrf": _run_mrf,
    "solve-nash": _run_finite,
    "solve-minmax": _run_finite,
    "solve-loomis": _run_finite,
    "solve-absorbing-finite": _run_finite,
    "solve-zerosum-poly": _run_zerosum,
    "solve-absorbing-poly": _run_absorbing_poly,
}


def run(cfg: RunConfig) -> RunReport:
    echo = {k: v for k, v in asdict(cfg).items() if k != "format"}
    t0 = time.perf_counter()
    try:
        cfg.validate()
        problem = parse_problem(cfg.path, cfg.command)
        t1 = time.perf_counter()
        status, code, res, times = _RUNNERS[cfg.command](problem, cfg)
    except (InputError, mrf.MrfError, GameInputError, finite_games.GameError) as exc:
        return RunReport(echo, "input-error", EXIT_INPUT, {"error": str(exc)})
    except (sdpgate.SdpError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return RunReport(echo, "solver-failure", EXIT_FAILURE, {"error": str(exc)})
    timings = {"parse": t1 - t0, **times, "total": time.perf_counter() - t0}
    return RunReport(echo, status, code, res, timings)


# ---------------------------------------------------------------------------
# text rendering


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def render_text(rep: RunReport) -> str:
    r = rep.result
    lines = [f"command: {rep.config['command']}  file: {rep.config['path']}",
             f"status: {rep.status} (exit {rep.exit_code})"]
    if "error" in r:
        lines.append(f"error: {r['error']}")
        return "\n".join(lines) + "\n"
    if "value" in r:
        lines.append(f"value: {_fmt(r['value'])}")
    if "lower" in r:
        lines.append(f"bounds: [{_fmt(r['lower'])}, {_fmt(r['upper'])}]")
    for o in r.get("orders", []):
        if "upper" in o:
            lines.append(f"  order {o['order']}: upper {_fmt(o['upper'])} lower {_fmt(o['lower'])} "
                         f"ranks ({_fmt(o['rank1'])}, {_fmt(o['rank2'])})")
        else:
            lines.append(f"  order {o['order']}: value {_fmt(o['value'])} [{o['status']}, {o['method']}] "
                         f"ranks {_fmt(o['rank_full'])}/{_fmt(o['rank_low'])} flat={o['flat']}")
    if r.get("profiles"):
        lines.append(f"equilibria ({len(r['profiles'])}):")
        for prof, resid in zip(r["profiles"], r.get("residuals") or [None] * len(r["profiles"])):
            txt = "  ".join("(" + ", ".join(f"{p:.6f}" for p in np.asarray(s)) + ")" for s in prof)
            lines.append(f"  {txt}" + (f"  residual {resid:.2e}" if resid is not None else ""))
    elif r.get("minimizers"):
        lines.append("minimizers:")
        for a, w in zip(r["minimizers"]["atoms"], r["minimizers"]["weights"]):
            lines.append(f"  {np.round(np.asarray(a), 6).tolist()}  weight {w:.6f}")
    for key in ("strategy1", "strategy2"):
        if r.get(key):
            parts = ", ".join(f"{w:.6f} at {np.round(np.asarray(a), 6).tolist()}"
                              for a, w in zip(r[key]["atoms"], r[key]["weights"]))
            lines.append(f"{key}: {parts}")
    if "evaluations" in r:
        lines.append(f"bisection: {r['bisections']} steps, bracket {r['bracket']}, "
                     f"monotone={r['monotone']}")
    for m in r.get("messages", []):
        lines.append(f"note: {m}")
    if rep.timings:
        lines.append("timings: " + ", ".join(f"{k} {v:.3f}s" for k, v in rep.timings.items()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="minmaxsdp",
        description="Moment-SOS solvers for min-max rational problems and games.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("path", help="problem file (JSON)")
    p.add_argument("--order", type=int, default=None,
                   help="relaxation order to start at (solve only this order unless --max-order)")
    p.add_argument("--max-order", type=int, default=None,
                   help="highest relaxation order; minimal order + 3 when omitted")
    p.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
    p.add_argument("--rank-tol", type=float, default=1e-6, help="relative numeric rank tolerance")
    p.add_argument("--perturb", type=float, default=None, metavar="EPS",
                   help="random objective perturbation of size EPS (MRF-based commands)")
    p.add_argument("--format", choices=("text", "machine"), default="text", help="output format")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--player", type=int, default=0, help="player index for solve-minmax")
    p.add_argument("--export-sdp", default=None, metavar="PATH",
                   help="write the last relaxation solved in sparse SDPA form")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args.command, args.path, args.order, args.max_order, args.tol, args.rank_tol,
                    args.perturb, args.format, args.seed, args.player, args.export_sdp)
    rep = run(cfg)
    sys.stdout.write(rep.machine() if cfg.format == "machine" else render_text(rep))
    return rep.exit_code


__all__ = ["RunConfig", "RunReport", "run", "main", "emit_machine", "parse_machine", "load_json"]
