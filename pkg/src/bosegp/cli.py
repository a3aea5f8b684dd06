"""Command-line batch driver.

Every pipeline is a subcommand.  Parameters come from a YAML or JSON config
file (``--config``) and may be overridden by the common flags; results are
written as CSV or JSON to ``--out`` (standard output by default) while
progress goes to standard error.  Runs are deterministic: the same config and
seed give byte-identical output.

Config keys (all optional, defaults in brackets)::

    potential: {kind: square_well|gaussian_truncated|hard_sphere|tabulated,
                V0: [10], R0: [1], width, samples | path}
    trap:      {kind: harmonic|quartic|torus, c: [1], L, M}
    a:         scattering length used by gp/gap [taken from the potential]
    N:         particle number or list of particle numbers
    ...        subcommand-specific keys, see ``SUBCOMMANDS``

Exit codes: 0 success, 2 validation error, 3 convergence error, 4 resource
error, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .errors import BoseGPError, ConvergenceError, ResourceError, ValidationError

__all__ = ["main", "run", "load_config", "SUBCOMMANDS", "EXIT_USAGE", "format_float"]

log = logging.getLogger("bosegp")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_RESOURCE = 4
EXIT_USAGE = 64


# -- config and output -------------------------------------------------------------------


def load_config(path: str | Path | None) -> dict[str, Any]:
    """Read a YAML or JSON mapping; a missing path gives an empty config."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file {str(p)!r} does not exist")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot parse config {str(p)!r}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping")
    return data


def format_float(x: Any) -> str:
    """Shortest round-trip representation (at most 17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def render(result: dict[str, Any], fmt: str) -> str:
    """CSV (header plus ``rows``) or JSON (the full result)."""
    if fmt == "json":
        return json.dumps(_jsonable(result), indent=2, sort_keys=False) + "\n"
    rows = result.get("rows", [])
    columns = result.get("columns") or (list(rows[0].keys()) if rows else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(row.get(c, "")) for c in columns])
    return buf.getvalue()


# -- builders from config ---------------------------------------------------------------


def _potential(cfg: dict[str, Any]):
    from .scattering import RadialPotential

    spec = dict(cfg.get("potential") or {"kind": "square_well", "V0": 10.0, "R0": 1.0})
    if spec.get("kind") == "tabulated" and "path" in spec:
        p = Path(spec["path"])
        if not p.is_file():
            raise ValidationError(f"tabulated potential file {str(p)!r} does not exist")
    return RadialPotential.from_dict(spec)


def _scattering(cfg: dict[str, Any]):
    from .scattering import solve_scattering

    opts = cfg.get("scattering") or {}
    return solve_scattering(_potential(cfg), r_max=opts.get("r_max"), n_points=int(opts.get("n_points", 4001)))


def _trap(cfg: dict[str, Any]):
    from .gp_solver import TrapPotential

    spec = dict(cfg.get("trap") or {"kind": "harmonic"})
    kind = spec.pop("kind", "harmonic")
    if kind in ("torus", "zero_on_torus"):
        return TrapPotential.torus(M=int(spec.get("M", 32)))
    if kind == "harmonic":
        return TrapPotential.harmonic(spec.get("c", 1.0), L=float(spec.get("L", 8.0)), M=int(spec.get("M", 64)))
    if kind == "quartic":
        return TrapPotential.quartic(float(spec.get("c", 1.0)), L=float(spec.get("L", 5.0)), M=int(spec.get("M", 64)))
    raise ValidationError(f"unknown trap kind {kind!r}")


def _a_value(cfg: dict[str, Any]) -> float:
    if "a" in cfg:
        return float(cfg["a"])
    return _scattering(cfg).a


def _n_list(cfg: dict[str, Any], key: str, default: Sequence[float]) -> list[float]:
    value = cfg.get(key, default)
    values = list(value) if isinstance(value, (list, tuple)) else [value]
    if not values:
        raise ValidationError(f"{key} must not be empty")
    return values


def _gp_state(cfg: dict[str, Any], trap=None, a: float | None = None):
    from .gp_solver import minimize_gp

    trap = _trap(cfg) if trap is None else trap
    a = _a_value(cfg) if a is None else a
    opts = cfg.get("gp") or {}
    return minimize_gp(trap, a, tol=float(opts.get("tol", 1e-8)), max_iter=int(opts.get("max_iter", 500)))


def _many_body_problem(cfg: dict[str, Any], N: int, seed: int):
    from .many_body import random_problem, toy_problem

    spec = dict(cfg.get("problem") or {})
    kind = spec.get("kind", "torus_1d")
    M = int(spec.get("M", 5))
    coupling = float(spec.get("coupling", 1.0))
    if kind == "random":
        return random_problem(np.random.default_rng(seed), M, N, coupling)
    return toy_problem(kind, M=M, N=N, coupling=coupling, width=float(spec.get("width", 0.1)))


# -- subcommands -------------------------------------------------------------------------


def cmd_scatter(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .scattering import scale

    sol = _scattering(cfg)
    # a hard sphere has no integrable V f; its scaling integrals are left empty
    finite = sol.potential.kind != "hard_sphere"
    rows = []
    for N in _n_list(cfg, "N", [1]):
        sc = scale(sol, float(N))
        rows.append(
            {
                "N": float(N),
                "a": sol.a,
                "a_quadrature": sol.a_quadrature,
                "N_int_Vf": float(N) * sc.integral_vf() if finite else math.nan,
                "eight_pi_a": 8.0 * math.pi * sol.a,
                "int_Vf_omega": sc.integral_vf_omega() if finite else math.nan,
            }
        )
    return {"potential": sol.potential.to_dict(), "a": sol.a, "a_quadrature": sol.a_quadrature, "rows": rows}


def cmd_gp(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    trap = _trap(cfg)
    state = _gp_state(cfg, trap)
    dump = (cfg.get("gp") or {}).get("dump_grid")
    if dump:
        state.dump_grid(dump)
    row = {
        "a": state.a,
        "e_gp": state.e_gp,
        "mu": state.mu,
        "residual": state.residual,
        "iterations": state.iterations,
        "L": state.grid.L,
        "M": state.grid.M,
    }
    return {**state.header(), "trap": trap.to_dict(), "rows": [row]}


def cmd_gap(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .gp_solver import gap_check

    trap = _trap(cfg)
    state = _gp_state(cfg, trap)
    rep = gap_check(state, trap)
    row = {"a": state.a, "e_gp": state.e_gp, **{k: v for k, v in rep.to_dict().items() if k != "window"}}
    row["window_lo"], row["window_hi"] = rep.window
    return {"e_gp": state.e_gp, "a": state.a, "gap": rep.to_dict(), "rows": [row]}


def cmd_quad_verify(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .quadratic import DEFAULT_C_EPS, LowerBoundSweep, verify_lower_bounds

    opts = cfg.get("quad") or {}
    sweep = verify_lower_bounds(
        seed,
        int(opts.get("instances", 1000)),
        dim_range=tuple(int(v) for v in opts.get("dim_range", (1, 8))),
        eps_range=tuple(float(v) for v in opts.get("eps_range", (0.05, 2.0))),
        c_eps=float(opts.get("c_eps", DEFAULT_C_EPS)),
        workers=threads,
    )
    fitted = sweep.fitted_c_eps
    return {
        "seed": seed,
        "instances": len(sweep.rows),
        "half_violations": sweep.half_violations,
        "fitted_c_eps": fitted,
        "quarter_violations_fitted": sweep.quarter_violations(fitted),
        "quarter_violations_used": sweep.quarter_violations(sweep.c_eps_used),
        "c_eps_used": sweep.c_eps_used,
        "c_eps_by_bucket": sweep.c_eps_by_bucket(),
        "columns": list(LowerBoundSweep.CSV_COLUMNS),
        "rows": sweep.rows,
    }


def cmd_quad_assemble(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .gp_solver import gap_check
    from .quadratic import assemble_from_gp, energy_report, plancherel_energy_reference, minimal_c_eps
    from .scattering import scale

    sol = _scattering(cfg)
    trap = _trap(cfg)
    state = _gp_state(cfg, trap, sol.a)
    rep = gap_check(state, trap)
    opts = cfg.get("quad") or {}
    mu = float(opts.get("mu", rep.default_mu))
    M = int(opts.get("modes", 8))
    rows = []
    for N in _n_list(cfg, "N", [8, 16, 32]):
        sc = scale(sol, float(N))
        qh = assemble_from_gp(state, sc, mu, M, trap)
        er = energy_report(qh)
        ref = plancherel_energy_reference(state, sc)
        rows.append(
            {
                "N": float(N),
                "exact": er.exact,
                "bound_half": er.bound_half,
                "bound_quarter": er.bound_quarter,
                "min_c_eps": minimal_c_eps(qh, er.exact),
                "reference": ref,
                "defect": er.exact - ref,
                "lambda_min": qh.lambda_min,
                "K_norm": qh.K_norm,
            }
        )
    return {"a": sol.a, "mu": mu, "modes": M, "gap": rep.to_dict(), "rows": rows}


def cmd_homog(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .homogeneous import DefectSweep, defect_sweep

    sol = _scattering(cfg)
    opts = cfg.get("homog") or {}
    cache = opts.get("cache", True)
    sweep = defect_sweep(sol, _n_list(cfg, "N", [50, 100, 200, 400, 800]), opts.get("mu"), cache=cache)
    return {
        "a": sol.a,
        "slope": sweep.slope,
        "slope_stderr": sweep.slope_stderr,
        "slope_consistent_with_zero": sweep.slope_consistent_with_zero,
        "bounded": sweep.bounded,
        "columns": list(DefectSweep.CSV_COLUMNS),
        "rows": sweep.rows,
    }


def cmd_ed(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .many_body import condensation_report, exact_diagonalize

    rows = []
    for N in _n_list(cfg, "N", [4]):
        problem = _many_body_problem(cfg, int(N), seed).adapted()
        res = exact_diagonalize(problem)
        cond = condensation_report(problem, res)
        rows.append(
            {
                "N": int(N),
                "M": problem.M,
                "lambda": problem.coupling,
                "E_N": res.energy,
                "depletion": cond.depletion,
                "trace_gamma1": res.trace_gamma1,
                "residual": res.residual,
                "dim": problem.sector.dim,
            }
        )
    return {"rows": rows}


def cmd_trial_bound(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .quasifree import TrialSweep, trial_upper_bound

    sol = _scattering(cfg)
    trap = _trap(cfg)
    state = _gp_state(cfg, trap, sol.a)
    opts = cfg.get("trial") or {}
    sweep = trial_upper_bound(
        state,
        sol,
        M=int(opts.get("modes", 8)),
        N_sweep=_n_list(cfg, "N", [8, 16, 32]),
        cutoff=float(opts.get("cutoff", 2.0)),
        C=float(opts.get("C", 0.0)),
    )
    rows = []
    for row, y in zip(sweep.rows, sweep.young):
        rows.append({**row, "young_lhs": y.convolution, "young_rhs": y.gp_value, "young_holds": y.holds()})
    return {
        "a": sol.a,
        "e_gp": state.e_gp,
        "slope": sweep.slope,
        "slope_stderr": sweep.slope_stderr,
        "slope_non_positive": sweep.slope_non_positive,
        "defect_range": sweep.defect_range,
        "columns": list(TrialSweep.CSV_COLUMNS) + ["young_lhs", "young_rhs", "young_holds"],
        "rows": rows,
    }


def cmd_sandwich(cfg: dict[str, Any], seed: int, threads: int) -> dict[str, Any]:
    from .many_body import sandwich

    opts = cfg.get("sandwich") or {}
    rows, details = [], []
    for N in _n_list(cfg, "N", [4]):
        problem = _many_body_problem(cfg, int(N), seed)
        rep = sandwich(problem, C=opts.get("C"), truncation=opts.get("truncation"))
        rows.append(rep.to_row())
        details.append(
            {
                **rep.to_row(),
                "trial_wick": rep.trial_wick,
                "trial_trace": rep.trial_trace,
                "trace_defect": rep.trace_defect,
                "gp_energy_analog": rep.gp_energy_analog,
                "C_at_zero": rep.C_at_zero,
                "variational_ok": rep.variational_ok,
                "lower_ok": rep.lower_ok,
            }
        )
    return {"details": details, "columns": ["N", "M", "lambda", "E_N", "depletion", "trial_energy", "c", "C"], "rows": rows}


SUBCOMMANDS: dict[str, tuple[Callable[[dict[str, Any], int, int], dict[str, Any]], str]] = {
    "scatter": (cmd_scatter, "scattering length and scaling integrals"),
    "gp": (cmd_gp, "Gross-Pitaevskii ground state"),
    "gap": (cmd_gap, "spectral gap certificate of the condensate"),
    "quad-verify": (cmd_quad_verify, "random sweep of the quadratic lower bounds"),
    "quad-assemble": (cmd_quad_assemble, "Bogoliubov Hamiltonian assembled from a GP state"),
    "homog": (cmd_homog, "homogeneous torus lattice sums along an N sweep"),
    "ed": (cmd_ed, "exact diagonalisation of a small Bose gas"),
    "trial-bound": (cmd_trial_bound, "quasi-free trial energy along an N sweep"),
    "sandwich": (cmd_sandwich, "variational and lower-bound sandwich of E_N"),
}


# -- entry point ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage code 64 instead of 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, default=None, help="random seed (u64); default from config or 0")
    common.add_argument("--threads", type=int, default=None, help="worker threads for independent problems")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="output format (default csv)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    parser = _Parser(prog="bosegp", description="Numerics for trapped Bose gases in the Gross-Pitaevskii regime.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name, (_, helptext) in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    return parser


def run(command: str, cfg: dict[str, Any], seed: int = 0, threads: int = 1, fmt: str = "csv") -> str:
    """Run one subcommand and return the rendered output."""
    if command not in SUBCOMMANDS:
        raise KeyError(command)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ValidationError("threads must be at least 1")
    result = SUBCOMMANDS[command][0](cfg, seed, threads)
    return render(result, fmt)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_config(args.config)
        seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
        threads = int(args.threads if args.threads is not None else cfg.get("threads", 1))
        fmt = args.format or cfg.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ValidationError(f"unknown format {fmt!r}")
        text = run(args.command, cfg, seed, threads, fmt)
        out = args.out or cfg.get("out")
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    except ResourceError as exc:
        log.error("%s", exc)
        return EXIT_RESOURCE
    except BoseGPError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    return EXIT_OK
