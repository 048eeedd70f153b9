"""Command-line interface and experiment orchestration.

Subcommands cover every library operation: symbolic expansion, recipe
compilation, existence checks, Monte Carlo runs, deterministic reference
solves, comparison with z-scores, and beta-ladder sweeps with extrapolation.

Exit codes: 0 success, 2 configuration/schema error, 3 simulation divergence
(population cap or blow-up), 4 assertion failure under ``--assert``.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig
from .engine import (
    DegenerateEstimate,
    EstimateReport,
    PopulationCapExceeded,
    default_workers,
    estimate,
    extrapolate_beta,
)
from .functions import BoundaryOutOfRange
from .oracle import (
    BlowUpDetected,
    Grid1D,
    SemilinearSpec,
    StabilityViolation,
    solve_semilinear,
)
from .recipes import (
    BranchingRecipe,
    DivergentTerm,
    ElementaryBranching,
    Infeasible,
    RescalingKind,
    UnderDetermined,
    check_existence,
    compile_recipe,
    cubic_recipe,
    expand_elementary,
    gradient_quadratic_recipe,
    identity_recipe,
    parse_target,
    psi_limit,
    psi_series,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ASSERT = 4

ESTIMATE_COLUMNS = (
    "x,t,mode,beta,N,v_hat,u_hat,stderr_u,mean_pop,max_deriv_order,seed"
)

_BUILTIN_RECIPES = {
    "gradient-quadratic": gradient_quadratic_recipe,
    "cubic": cubic_recipe,
    "identity": identity_recipe,
}


def _fmt(value) -> str:
    """Floats with 17 significant digits; everything else verbatim."""
    if isinstance(value, float):
        return format(value, ".17g")
    return "" if value is None else str(value)


def _estimate_row(rep: EstimateReport) -> str:
    return ",".join(
        _fmt(v)
        for v in (
            rep.x,
            rep.horizon,
            rep.mode,
            rep.beta,
            rep.replicas,
            rep.v_hat,
            rep.u_hat,
            rep.stderr_u,
            rep.mean_population,
            rep.max_deriv_order,
            rep.master_seed,
        )
    )


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_report(payload: dict, config_hash: str) -> dict:
    return {
        "config_hash": config_hash,
        **payload,
        "metadata": {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()},
    }


def _load_recipe(args) -> BranchingRecipe:
    if getattr(args, "builtin", None):
        return _BUILTIN_RECIPES[args.builtin]()
    if getattr(args, "recipe", None):
        return BranchingRecipe.load(args.recipe)
    raise ConfigError("need --recipe FILE or --builtin NAME")


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config FILE")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    # --workers is an execution detail: it never enters the hashed document
    return ExperimentConfig.load(args.config, overrides)


# -- symbolic subcommands ---------------------------------------------


def _cmd_expand(args) -> int:
    branching = ElementaryBranching.from_label(args.branching)
    rescaling = RescalingKind.from_label(args.rescaling)
    series = expand_elementary(branching, rescaling, args.order, arg=args.arg)
    for order in range(series.lowest_order, series.truncation_order):
        print(f"beta^{order}: {series.coefficient(order)}")
    print(f"truncated at beta^{series.truncation_order}")
    return EXIT_OK


def _cmd_psi(args) -> int:
    recipe = _load_recipe(args)
    rescaling = RescalingKind.from_label(args.rescaling)
    if args.series:
        series = psi_series(recipe, rescaling, recipe.intensity_exponent + 2)
        for order in range(series.lowest_order, series.truncation_order):
            print(f"beta^{order}: {series.coefficient(order)}")
        return EXIT_OK
    print(psi_limit(recipe, rescaling))
    return EXIT_OK


def _cmd_compile(args) -> int:
    target = parse_target(args.target)
    ansatz = [ElementaryBranching.from_label(t) for t in args.ansatz.split(",")]
    rescaling = RescalingKind.from_label(args.rescaling)
    recipe = compile_recipe(target, ansatz, rescaling)
    doc = recipe.to_json()
    if args.out:
        recipe.save(args.out)
    print(json.dumps(doc, indent=2))
    c = recipe.intensity_coeff
    print(
        f"# probabilities: {', '.join(e['probability'] for e in doc['entries'])}; "
        f"k = ({c.numerator}/{c.denominator}) * beta^-{recipe.intensity_exponent}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_exist_check(args) -> int:
    cfg = _load_config(args)
    recipe = cfg.recipe() or identity_recipe()
    t = cfg.data["horizon"]
    xs = cfg.data["points"]
    window = (min(xs) - 8.0 * t**0.5, max(xs) + 8.0 * t**0.5)
    report = check_existence(recipe, cfg.boundary(), window)
    print(json.dumps(_json_report(report.to_json(), cfg.hash), indent=2))
    return EXIT_OK


# -- Monte Carlo subcommands ------------------------------------------


def _run_estimates(cfg: ExperimentConfig, workers: int | None):
    """One EstimateReport per (beta, x) cell, in canonical order."""
    d = cfg.data
    betas = d["betas"] if d["mode"] == "super" else [None]
    reports = []
    for beta in betas:
        for x in d["points"]:
            reports.append(estimate(cfg.run_spec(beta=beta, x=x), workers=workers))
    return reports


def _emit_estimates(cfg: ExperimentConfig, reports, args) -> None:
    lines = [f"# config_hash={cfg.hash}", ESTIMATE_COLUMNS]
    lines += [_estimate_row(r) for r in reports]
    csv_path = args.out or cfg.data["output"]["csv"]
    _write_text(csv_path, "\n".join(lines) + "\n")
    json_path = cfg.data["output"]["json"]
    if json_path:
        doc = _json_report(
            {"estimates": [r.to_json() for r in reports], "config": cfg.to_json()},
            cfg.hash,
        )
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _cmd_run(args, mode: str) -> int:
    cfg = _load_config(args)
    if cfg.data["mode"] != mode:
        raise ConfigError(f"config mode {cfg.data['mode']!r} does not match subcommand")
    workers = args.workers or cfg.data["workers"] or default_workers()
    reports = _run_estimates(cfg, workers)
    _emit_estimates(cfg, reports, args)
    return EXIT_OK


# -- deterministic reference ------------------------------------------


def _oracle_spec(cfg: ExperimentConfig) -> SemilinearSpec:
    tag = cfg.data["oracle"]["nonlinearity"]
    if tag == "heat":
        return SemilinearSpec.heat()
    if tag == "kpp":
        return SemilinearSpec.kpp()
    if tag != "auto":
        return SemilinearSpec.from_nonlinearity(parse_target(tag))
    if cfg.data["mode"] == "mckean":
        return SemilinearSpec.kpp()
    recipe = cfg.recipe()
    if recipe is None:
        raise ConfigError("oracle nonlinearity 'auto' needs a recipe in the config")
    return SemilinearSpec.from_psi(psi_limit(recipe, cfg.rescaling()))


def _solve_oracle(cfg: ExperimentConfig):
    o = cfg.data["oracle"]
    grid = Grid1D(o["period"], o["points"])
    dt = o["dt_factor"] * grid.h**2
    spec = _oracle_spec(cfg)
    solution = solve_semilinear(spec, cfg.boundary(), cfg.data["horizon"], grid, dt)
    return spec, grid, solution


def _cmd_oracle(args) -> int:
    cfg = _load_config(args)
    spec, grid, solution = _solve_oracle(cfg)
    t = cfg.data["horizon"]
    lines = [f"# config_hash={cfg.hash}", "x,u"]
    values = solution.at(t)
    lines += [f"{_fmt(float(x))},{_fmt(float(u))}" for x, u in zip(grid.x, values)]
    _write_text(args.out, "\n".join(lines) + "\n")
    if cfg.data["output"]["json"]:
        doc = _json_report(
            {
                "nonlinearity": spec.to_json(),
                "grid": {"period": grid.period, "points": grid.points},
                "horizon": t,
            },
            cfg.hash,
        )
        with open(cfg.data["output"]["json"], "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


# -- comparison and sweeps --------------------------------------------


def _read_csv(path: str):
    """(config_hash, header, rows-as-dicts) of one of our CSV files."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    config_hash = None
    if lines and lines[0].startswith("# config_hash="):
        config_hash = lines.pop(0).split("=", 1)[1]
    if not lines:
        raise ConfigError(f"{path}: empty CSV")
    header = lines.pop(0).split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines]
    return config_hash, header, rows


def _oracle_interp(rows) -> tuple[np.ndarray, np.ndarray]:
    xs = np.array([float(r["x"]) for r in rows])
    us = np.array([float(r["u"]) for r in rows])
    order = np.argsort(xs)
    return xs[order], us[order]


def _compare_rows(mc_rows, oracle_xs, oracle_us, tol):
    out = []
    for row in mc_rows:
        x = float(row["x"])
        u_hat = float(row["u_hat"])
        se = float(row["stderr_u"])
        ref = float(np.interp(x, oracle_xs, oracle_us))
        diff = u_hat - ref
        z = diff / se if se > 0 else float("inf") * np.sign(diff) if diff else 0.0
        bound = tol["abs"] + tol["rel"] * abs(ref)
        passed = abs(z) <= tol["z_max"] or abs(diff) <= bound
        out.append(
            {
                "x": x,
                "beta": float(row["beta"]) if row.get("beta") else None,
                "u_hat": u_hat,
                "stderr_u": se,
                "oracle": ref,
                "diff": diff,
                "z": z,
                "pass": passed,
            }
        )
    return out


def _cmd_compare(args) -> int:
    tol = {"z_max": args.z_max, "abs": args.abs_tol, "rel": args.rel_tol}
    mc_hash, _, mc_rows = _read_csv(args.mc)
    or_hash, header, or_rows = _read_csv(args.oracle)
    if header[:2] != ["x", "u"]:
        raise ConfigError(f"{args.oracle}: expected an x,u oracle CSV")
    if mc_hash is None or or_hash is None or mc_hash != or_hash:
        raise ConfigError(
            f"config hash mismatch: {args.mc} has {mc_hash}, {args.oracle} has {or_hash}"
        )
    oracle_xs, oracle_us = _oracle_interp(or_rows)
    results = _compare_rows(mc_rows, oracle_xs, oracle_us, tol)
    doc = _json_report({"rows": results, "all_pass": all(r["pass"] for r in results)}, mc_hash)
    text = json.dumps(doc, indent=2) + "\n"
    _write_text(args.out, text)
    if args.do_assert and not doc["all_pass"]:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    d = cfg.data
    if d["mode"] != "super":
        raise ConfigError("sweep needs a super-mode config")
    if len(d["betas"]) < 2:
        raise ConfigError("sweep needs at least two beta values")
    workers = args.workers or d["workers"] or default_workers()
    reports = _run_estimates(cfg, workers)
    _emit_estimates(cfg, reports, args)

    _, grid, solution = _solve_oracle(cfg)
    t = d["horizon"]
    tol = d["tolerances"]
    summary = []
    all_pass = True
    for x in d["points"]:
        cell = [r for r in reports if r.x == x]
        points = [(r.beta, r.u_hat, r.stderr_u) for r in cell]
        u0, fit = extrapolate_beta(points)
        se0 = fit.stderrs[0]
        ref = solution.interp(t, x)
        diff = u0 - ref
        bound = tol["abs"] + tol["rel"] * abs(ref) + tol["z_max"] * se0
        passed = abs(diff) <= bound
        all_pass &= passed
        summary.append(
            {
                "x": x,
                "u0": u0,
                "stderr_u0": se0,
                "oracle": ref,
                "diff": diff,
                "bound": bound,
                "pass": passed,
                "fit": fit.to_json(),
                "ladder": [
                    {"beta": r.beta, "u_hat": r.u_hat, "stderr_u": r.stderr_u}
                    for r in cell
                ],
            }
        )
    doc = _json_report({"summary": summary, "all_pass": all_pass}, cfg.hash)
    path = d["output"]["json"]
    text = json.dumps(doc, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.do_assert and not all_pass:
        return EXIT_ASSERT
    return EXIT_OK


# -- parser -----------------------------------------------------------


def _add_common(p, config=True):
    if config:
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker threads")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superbranch",
        description="branching recipes as stochastic solvers for semilinear PDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="series expansion of one elementary branching")
    p.add_argument("--branching", required=True, help="power2, reciprocal, deriv+, deriv-")
    p.add_argument("--rescaling", default="type1")
    p.add_argument("--order", type=int, default=4, help="truncation order K")
    p.add_argument("--arg", choices=["primal", "reciprocal"], default="primal")
    p.set_defaults(func=_cmd_expand)

    p = sub.add_parser("psi", help="limiting nonlinearity of a recipe")
    p.add_argument("--recipe", help="recipe JSON file")
    p.add_argument("--builtin", choices=sorted(_BUILTIN_RECIPES))
    p.add_argument("--rescaling", default="type1")
    p.add_argument("--series", action="store_true", help="print the full beta series")
    p.set_defaults(func=_cmd_psi)

    p = sub.add_parser("compile", help="solve for a recipe matching a nonlinearity")
    p.add_argument("--target", required=True, help='e.g. "-u^3" or "2*u^2 + ux^2"')
    p.add_argument("--ansatz", required=True, help="comma-separated branching labels")
    p.add_argument("--rescaling", default="type1")
    p.add_argument("--out", help="write the recipe JSON here")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("exist-check", help="admissibility of a configured run")
    _add_common(p)
    p.set_defaults(func=_cmd_exist_check)

    p = sub.add_parser("run-mckean", help="Monte Carlo run, binary branching")
    _add_common(p)
    p.set_defaults(func=lambda a: _cmd_run(a, "mckean"))

    p = sub.add_parser("run-super", help="Monte Carlo run, tagged branching")
    _add_common(p)
    p.set_defaults(func=lambda a: _cmd_run(a, "super"))

    p = sub.add_parser("oracle", help="deterministic reference solve")
    _add_common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("compare", help="join an MC CSV with an oracle CSV")
    p.add_argument("--mc", required=True, help="estimate CSV")
    p.add_argument("--oracle", required=True, help="oracle CSV (x,u)")
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--abs-tol", type=float, default=1e-3)
    p.add_argument("--rel-tol", type=float, default=0.0)
    p.add_argument("--assert", dest="do_assert", action="store_true")
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep", help="beta ladder + extrapolation + comparison")
    _add_common(p)
    p.add_argument("--assert", dest="do_assert", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        PopulationCapExceeded,
        DegenerateEstimate,
        BlowUpDetected,
        StabilityViolation,
        BoundaryOutOfRange,
    ) as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, Infeasible, UnderDetermined, DivergentTerm, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
