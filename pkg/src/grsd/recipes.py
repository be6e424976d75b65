"""Named experiment recipes: schema validation, execution, artifacts.

Every recipe resolves a strict parameter schema (unknown keys are rejected),
derives per-component seeds from the master seed, writes its data artifacts
with fixed decimal formatting, and finishes with a manifest listing every
file and its SHA-256 digest.  Identical (recipe, seed) runs produce
byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .configfile import ParsedConfig, coerce, parse_config_file
from .errors import SchemaViolationError
from .matio import format_float

SWEEP_COLUMNS = ("epsilon", "eta", "L", "KS", "d", "tau_mix",
                 "err_bulk", "err_boundary", "seed")


# ---------------------------------------------------------------------------
# Parameter schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    kind: str
    default: object
    help: str = ""
    check: object = None        # callable(value) -> error string or None


def _positive(name):
    def check(v):
        if not v > 0:
            return f"{name} must be positive"
        return None
    return check


def _unit_open(name):
    def check(v):
        if not (0.0 < v < 1.0):
            return (f"{name} must lie strictly inside (0, 1) "
                    "(depth-threshold invariant)")
        return None
    return check


def _nonempty_list(name):
    def check(v):
        if len(v) == 0:
            return f"{name} must not be empty"
        return None
    return check


RECIPE_SCHEMAS = {
    "power-law-recovery": {
        "exponent": ParamSpec("float", 0.7, "power-law exponent of the manufactured velocity"),
        "coefficient": ParamSpec("float", 3.0, "velocity prefactor", _positive("coefficient")),
        "bin_width": ParamSpec("float", 0.2, "log-bin width", _positive("bin_width")),
        "profile_center": ParamSpec("float", 0.0, "initial profile center in log-lambda"),
        "profile_width": ParamSpec("float", 0.8, "initial profile width", _positive("profile_width")),
        "n_times": ParamSpec("int", 21, "number of time samples", _positive("n_times")),
        "horizon": ParamSpec("float", 0.0, "time horizon; 0 picks the largest safe value"),
        "dissipation": ParamSpec("str", "zero", "dissipation closure: zero | linear"),
        "gamma": ParamSpec("float", 0.0, "linear dissipation coefficient"),
    },
    "condition-suite": {
        "depth": ParamSpec("int", 256, "residual stack depth", _positive("depth")),
        "state_dim": ParamSpec("int", 128, "state dimension", _positive("state_dim")),
        "function_dim": ParamSpec("int", 128, "function-space dimension", _positive("function_dim")),
        "branch_dim": ParamSpec("int", 1, "per-layer branch parameter count", _positive("branch_dim")),
        "epsilon": ParamSpec("float", 0.1, "residual step size", _positive("epsilon")),
        "bandwidth": ParamSpec("int", 1, "training-drift bandwidth K"),
        "budget": ParamSpec("float", 0.5, "coefficient budget C_A of the drift", _positive("budget")),
        "horizon": ParamSpec("float", 0.5, "training horizon", _positive("horizon")),
        "n_steps": ParamSpec("int", 100, "integrator steps", _positive("n_steps")),
        "n_samples": ParamSpec("int", 9, "path samples", _positive("n_samples")),
        "rho_w": ParamSpec("float", 0.5, "envelope weight base", _unit_open("rho_w")),
    },
    "residual-depth-sweep": {
        "err_depths": ParamSpec("int-list", [32, 128, 512], "depth grid for the stationarity trend", _nonempty_list("err_depths")),
        "err_seeds": ParamSpec("int", 10, "seeds per depth for the trend", _positive("err_seeds")),
        "trend_dim": ParamSpec("int", 96, "operator dimension of the trend probe", _positive("trend_dim")),
        "epsilon": ParamSpec("float", 0.1, "residual step size", _positive("epsilon")),
        "be_depths": ParamSpec("int-list", [100, 1000, 10000], "depth grid for the normality rate", _nonempty_list("be_depths")),
        "be_ensemble": ParamSpec("int", 4096, "ensemble size per depth", _positive("be_ensemble")),
        "kick_probability": ParamSpec("float", 0.004, "per-step kick probability of the rate probe", _unit_open("kick_probability")),
        "dilution_depths": ParamSpec("int-list", [64, 256, 1024], "depth grid for boundary dilution", _nonempty_list("dilution_depths")),
        "ell_star": ParamSpec("int", 8, "number of fixed boundary layers"),
        "dilution_dim": ParamSpec("int", 48, "operator dimension of the dilution probe", _positive("dilution_dim")),
    },
    "mixing-sweep": {
        "epsilons": ParamSpec("float-list", [0.05, 0.1, 0.2], "residual step sizes", _nonempty_list("epsilons")),
        "eta": ParamSpec("float", 0.05, "isotropy tolerance", _unit_open("eta")),
        "ensemble": ParamSpec("int", 4096, "chains per step size", _positive("ensemble")),
        "dim": ParamSpec("int", 8, "chain dimension", _positive("dim")),
        "max_layers": ParamSpec("int", 4000, "layer budget", _positive("max_layers")),
    },
    "gronwall-check": {
        "n_seeds": ParamSpec("int", 20, "number of independent draws", _positive("n_seeds")),
        "depth": ParamSpec("int", 12, "number of blocks", _positive("depth")),
        "block_dim": ParamSpec("int", 4, "columns per block", _positive("block_dim")),
        "function_dim": ParamSpec("int", 64, "rows of every block", _positive("function_dim")),
        "bandwidth": ParamSpec("int", 1, "evolution bandwidth K"),
        "budget": ParamSpec("float", 0.8, "coefficient budget C_A", _positive("budget")),
        "horizon": ParamSpec("float", 1.0, "evolution horizon", _positive("horizon")),
        "n_steps": ParamSpec("int", 200, "integrator steps", _positive("n_steps")),
        "rho_w": ParamSpec("float", 0.5, "envelope weight base", _unit_open("rho_w")),
    },
    "covariance-check": {
        "alphas": ParamSpec("float-list", [0.5, 2.0, 3.0], "loss scale factors", _nonempty_list("alphas")),
        "horizon": ParamSpec("float", 2.0, "flow horizon", _positive("horizon")),
        "step": ParamSpec("float", 1e-3, "integrator step", _positive("step")),
        "method": ParamSpec("str", "rk4", "integrator: rk4 | euler"),
    },
}

RECIPE_NAMES = tuple(sorted(RECIPE_SCHEMAS))


@dataclass(frozen=True)
class ExperimentRecipe:
    name: str
    seed: int
    out_dir: str | None
    params: dict

    def resolved(self) -> dict:
        return {"name": self.name, "seed": self.seed, "params": dict(self.params)}


def validate_config(path) -> ExperimentRecipe:
    """Parse and validate a config file against the recipe schemas.

    Unknown sections/keys are rejected by name with their line number; all
    defaults are resolved here so the runner never defaults silently.
    """
    parsed = parse_config_file(path)
    return validate_parsed(parsed)


def validate_parsed(parsed: ParsedConfig) -> ExperimentRecipe:
    problems = []
    sections = parsed.sections()
    known_sections = {"recipe", "params"}
    for sec in sections:
        if sec not in known_sections:
            line = min(e.line for e in sections[sec].values())
            problems.append(f"line {line}: unknown section [{sec}]")

    recipe_sec = sections.get("recipe", {})
    name = None
    seed = 0
    out_dir = None
    if "name" not in recipe_sec:
        problems.append("[recipe] section must set 'name'")
    else:
        name = recipe_sec["name"].raw
        if name not in RECIPE_SCHEMAS:
            problems.append(
                f"line {recipe_sec['name'].line}: unknown recipe {name!r}; "
                f"choose from {', '.join(RECIPE_NAMES)}")
            name = None
    for key, entry in recipe_sec.items():
        if key == "name":
            continue
        if key == "seed":
            try:
                seed = coerce(entry, "int")
            except ValueError as exc:
                problems.append(str(exc))
        elif key == "out_dir":
            out_dir = entry.raw
        else:
            problems.append(f"line {entry.line}: unknown key {key!r} in [recipe]")

    params = {}
    if name is not None:
        schema = RECIPE_SCHEMAS[name]
        given = sections.get("params", {})
        for key, entry in given.items():
            if key not in schema:
                problems.append(
                    f"line {entry.line}: unknown key {key!r} for recipe {name}")
                continue
            spec = schema[key]
            try:
                value = coerce(entry, spec.kind)
            except ValueError as exc:
                problems.append(str(exc))
                continue
            if spec.check is not None:
                msg = spec.check(value)
                if msg:
                    problems.append(f"line {entry.line}: {msg}")
                    continue
            params[key] = value
        for key, spec in schema.items():
            if key not in params:
                params[key] = spec.default

    if problems:
        raise SchemaViolationError(problems)
    return ExperimentRecipe(name=name, seed=seed, out_dir=out_dir, params=params)


# ---------------------------------------------------------------------------
# Seed derivation and output plumbing
# ---------------------------------------------------------------------------

def derive_seeds(master: int, labels) -> dict:
    """Stable per-component integer seeds from one master seed.

    Components are assigned SeedSequence spawn children in sorted label
    order; the mapping is recorded in the manifest of every run.
    """
    labels = sorted(labels)
    children = np.random.SeedSequence(master).spawn(len(labels))
    return {lab: int(child.generate_state(1)[0])
            for lab, child in zip(labels, children)}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class RunWriter:
    """Collects artifacts for one run directory and finalizes the manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def add(self, name: str):
        self.artifacts.append(name)
        return self.path(name)

    def write_text(self, name: str, text: str) -> Path:
        p = self.add(name)
        p.write_text(text)
        return p

    def write_json(self, name: str, payload) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows) -> Path:
        lines = [",".join(header)]
        for row in rows:
            cells = []
            for x in row:
                if isinstance(x, str):
                    cells.append(x)
                elif isinstance(x, (int, np.integer)):
                    cells.append(str(int(x)))
                elif x is None:
                    cells.append("nan")
                else:
                    cells.append(format_float(x))
            lines.append(",".join(cells))
        return self.write_text(name, "\n".join(lines) + "\n")

    def finalize(self, recipe: ExperimentRecipe, seeds: dict, summary: dict) -> dict:
        manifest = {
            "version": __version__,
            "recipe": recipe.resolved(),
            "component_seeds": seeds,
            "summary": summary,
            "artifacts": [
                {"name": name,
                 "bytes": self.path(name).stat().st_size,
                 "sha256": _sha256(self.path(name))}
                for name in self.artifacts
            ],
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def write_sweep_rows(writer: RunWriter, name: str, rows) -> Path:
    """Rows in the shared sweep schema; missing fields are written as nan."""
    out = []
    for row in rows:
        out.append(tuple(row.get(col) for col in SWEEP_COLUMNS))
    return writer.write_csv(name, SWEEP_COLUMNS, out)


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Recipe runners
# ---------------------------------------------------------------------------

def _run_power_law_recovery(recipe, writer, threads):
    from .shells import (
        manufactured_power_law_series, recover_power_law,
        safe_transport_horizon, transport_grid,
    )
    p = recipe.params
    a, c = p["exponent"], p["coefficient"]
    horizon = p["horizon"]
    if horizon <= 0:
        horizon = safe_transport_horizon(a, c, p["profile_center"], p["profile_width"])
    grid = transport_grid(a, c, p["profile_center"], p["profile_width"],
                          p["bin_width"], horizon)
    times = np.linspace(0.0, horizon, p["n_times"]) + horizon * 1e-3
    series = manufactured_power_law_series(grid, times, a, c,
                                           p["profile_center"], p["profile_width"])
    fit, flux, v, mask = recover_power_law(series, p["dissipation"], p["gamma"])

    eps_density = series.densities()
    rows = []
    for i, t in enumerate(times):
        for b in range(grid.n_bins):
            rows.append((t, b, grid.lambda_centers[b], series.energies[i, b],
                         eps_density[i, b], flux.boundary_fluxes[i, b],
                         flux.dissipation[i, b],
                         v[i, b] if mask[i, b] else None))
    writer.write_csv("shells.csv",
                     ("t", "bin", "lambda_center", "E", "eps", "F_lower", "D", "v"),
                     rows)
    balance = float(flux.balance_residual().max())
    rate_scale = float(np.abs(flux.energy_rates).max())
    payload = fit.to_dict()
    payload.update({
        "dissipation_model": flux.dissipation_model,
        "true_exponent": a,
        "true_coefficient": c,
        "balance_residual_max": balance,
        "balance_scale": rate_scale,
    })
    writer.write_json("fit.json", payload)
    return {
        "exponent_error": abs(fit.exponent - a),
        "coefficient_rel_error": abs(float(np.mean(fit.coefficients)) / c - 1.0),
        "r_squared": fit.r_squared,
        "balance_residual_max": balance,
    }


def _run_condition_suite(recipe, writer, threads):
    from .configs import residual_training_path
    from .conditions import (
        bandedness_residual, condition_suite, envelope_from_blocks,
        theoretical_growth_rate,
    )
    from .linalg import operator_norm

    p = recipe.params
    seeds = derive_seeds(recipe.seed, ["config"])
    path, law, stack = residual_training_path(
        seeds["config"], depth=p["depth"], state_dim=p["state_dim"],
        function_dim=p["function_dim"], branch_dim=p["branch_dim"],
        epsilon=p["epsilon"], bandwidth=p["bandwidth"], budget=p["budget"],
        horizon=p["horizon"], n_steps=p["n_steps"], n_samples=p["n_samples"])
    c_a = law.coefficient_budget(p["depth"])
    c_rho = theoretical_growth_rate(c_a, p["bandwidth"], p["rho_w"])
    report = condition_suite(path, theoretical_rate=c_rho,
                             weight_base=p["rho_w"],
                             provenance={"seed": seeds["config"],
                                         "family": "residual",
                                         "measured_c_a": c_a,
                                         "c_rho": c_rho})
    writer.write_text("condition_report.json", report.to_json() + "\n")

    env_rows = []
    for i, t in enumerate(path.times):
        env = envelope_from_blocks(path.jacobians[i])
        for k, u in enumerate(env):
            env_rows.append((t, k, u))
    writer.write_csv("envelope.csv", ("t", "k", "u_k"), env_rows)

    mid = len(path.times) // 2
    res_rows = []
    for k in range(0, p["bandwidth"] + 3):
        res, _ = bandedness_residual(path.jacobians[mid],
                                     path.jacobian_rates[mid], k)
        for l, r in enumerate(res):
            res_rows.append((k, l, r))
    writer.write_csv("bandedness.csv", ("K", "block", "residual"), res_rows)

    norm_rows = [(float(t),
                  operator_norm(path.jacobians[i].concatenated()),
                  operator_norm(path.jacobian_rates[i].concatenated()))
                 for i, t in enumerate(path.times)]
    writer.write_csv("path_norms.csv", ("t", "norm_J", "norm_rate"), norm_rows)

    from .conditions import coupling_operator_from_path, log_bin_couplings
    from .configs import assemble_additive_M
    from .linalg import symmetric_eigendecompose
    m_mid = assemble_additive_M(path.jacobians[mid].blocks)
    eig = symmetric_eigendecompose(m_mid)
    from .conditions import _auto_bin_width
    from .linalg import LogBinGrid
    grid = LogBinGrid.from_eigenvalues(eig, bin_width=_auto_bin_width(eig))
    rep4 = log_bin_couplings(eig, coupling_operator_from_path(path, mid), grid)
    coup_rows = []
    for ii, bi in enumerate(rep4.window_bins):
        for jj, bj in enumerate(rep4.window_bins):
            coup_rows.append((bi, bj, rep4.coupling_power[ii, jj],
                              rep4.coupling_mean[ii, jj]))
    writer.write_csv("couplings.csv", ("bin_i", "bin_j", "power", "mean"), coup_rows)
    return {
        "all_passed": report.all_passed,
        "scores": {k: v["score"] for k, v in report.conditions.items()},
    }, seeds


def _run_residual_depth_sweep(recipe, writer, threads):
    from .chains import berry_esseen_sweep, dilution_sweep, stationarity_trend
    p = recipe.params
    seeds = derive_seeds(recipe.seed, ["trend", "berry-esseen", "dilution"])

    trend_seed_list = [seeds["trend"] % (2 ** 31) + i for i in range(p["err_seeds"])]
    means, errs = stationarity_trend(p["err_depths"], trend_seed_list,
                                     dim=p["trend_dim"], epsilon=p["epsilon"])
    rows = []
    for i, L in enumerate(p["err_depths"]):
        for j, s in enumerate(trend_seed_list):
            rows.append({"epsilon": p["epsilon"], "L": L,
                         "err_bulk": errs[i, j], "seed": s})
    write_sweep_rows(writer, "stationarity_trend.csv", rows)
    monotone = bool(np.all(np.diff(means) < 0))

    be = berry_esseen_sweep(p["be_depths"], p["be_ensemble"],
                            seed=seeds["berry-esseen"],
                            epsilon=p["epsilon"],
                            kick_probability=p["kick_probability"])
    write_sweep_rows(writer, "berry_esseen.csv", [
        {"epsilon": p["epsilon"], "L": L, "KS": ks, "seed": seeds["berry-esseen"]}
        for L, ks in zip(be.depths, be.ks_values)])

    dil = dilution_sweep(p["dilution_depths"], ell_star=p["ell_star"],
                         dim=p["dilution_dim"], seed=seeds["dilution"])
    write_sweep_rows(writer, "dilution.csv", [
        {"epsilon": p["epsilon"], "L": d.depth, "err_bulk": d.bulk_err,
         "err_boundary": d.boundary_contribution, "seed": seeds["dilution"]}
        for d in dil])

    return {
        "err_means": [float(m) for m in means],
        "err_trend_monotone": monotone,
        "ks_values": list(be.ks_values),
        "ks_slope": be.slope,
        "boundary_contributions": [d.boundary_contribution for d in dil],
        "additivity_gap_max": max(d.additivity_gap for d in dil),
    }, seeds


def _run_mixing_sweep(recipe, writer, threads):
    from .chains import mixing_time
    p = recipe.params
    labels = [f"epsilon={e:g}" for e in p["epsilons"]]
    seeds = derive_seeds(recipe.seed, labels)

    def one(eps):
        return mixing_time(dim=p["dim"], epsilon=eps, eta=p["eta"],
                           ensemble=p["ensemble"], max_layers=p["max_layers"],
                           seed=seeds[f"epsilon={eps:g}"])
    results = _parallel_map(one, p["epsilons"], threads)
    rows = []
    for eps, est in zip(p["epsilons"], results):
        rows.append({"epsilon": eps, "eta": p["eta"], "L": p["max_layers"],
                     "d": float(est.distances[-1]),
                     "tau_mix": est.tau_mix, "seed": seeds[f"epsilon={eps:g}"]})
    write_sweep_rows(writer, "mixing.csv", rows)
    curve_rows = []
    for eps, est in zip(p["epsilons"], results):
        for ell, dval in enumerate(est.distances):
            curve_rows.append((eps, ell, dval))
    writer.write_csv("mixing_curves.csv", ("epsilon", "layer", "d"), curve_rows)
    taus = {eps: est.tau_mix for eps, est in zip(p["epsilons"], results)}
    ratios = {}
    for eps in p["epsilons"]:
        twice = 2 * eps
        key = min((e for e in p["epsilons"]), key=lambda e: abs(e - twice))
        if abs(key - twice) < 1e-12 and taus[eps] and taus[key]:
            ratios[f"tau({eps:g})/tau({key:g})"] = taus[eps] / taus[key]
    return {
        "tau_mix": {f"{k:g}": v for k, v in taus.items()},
        "ratios": ratios,
        "all_mixed": all(est.mixed for est in results),
    }, seeds


def _run_gronwall_check(recipe, writer, threads):
    from .configs import (
        IncoherenceProfile, make_incoherent_blocks, random_banded_evolution,
        simulate_banded_evolution,
    )
    from .conditions import incoherence_envelope, theoretical_growth_rate
    p = recipe.params
    seeds = derive_seeds(recipe.seed, [f"draw-{i}" for i in range(p["n_seeds"])])

    def one(i):
        seed = seeds[f"draw-{i}"]
        dims = [p["block_dim"]] * p["depth"]
        profile = IncoherenceProfile.geometric(0.5, p["depth"], scale=0.2)
        init = make_incoherent_blocks(p["function_dim"], dims, profile, seed)
        law = random_banded_evolution(dims, p["bandwidth"], p["budget"], seed + 1)
        path = simulate_banded_evolution(init, law, p["horizon"], p["n_steps"],
                                         n_samples=11)
        c_a = law.coefficient_budget(p["depth"])
        c_rho = theoretical_growth_rate(c_a, p["bandwidth"], p["rho_w"])
        rep = incoherence_envelope(path.jacobians, p["rho_w"],
                                   theoretical_rate=c_rho)
        return seed, c_a, c_rho, rep
    results = _parallel_map(one, list(range(p["n_seeds"])), threads)
    rows = []
    for seed, c_a, c_rho, rep in results:
        rows.append((seed, c_a, c_rho, float(rep.weighted_sum[0]),
                     rep.margin, rep.growth_rate_estimate,
                     int(rep.passes())))
    writer.write_csv("gronwall.csv",
                     ("seed", "C_A", "C_rho", "U0", "margin", "rate_estimate", "passed"),
                     rows)
    margins = [rep.margin for _, _, _, rep in results]
    return {
        "min_margin": min(margins),
        "all_passed": all(rep.passes() for _, _, _, rep in results),
    }, seeds


def _run_covariance_check(recipe, writer, threads):
    from .flow import check_time_rescaling_covariance, default_models
    p = recipe.params
    models = default_models()

    jobs = [(name, alpha) for name in sorted(models) for alpha in p["alphas"]]

    def one(job):
        name, alpha = job
        dev = check_time_rescaling_covariance(models[name], alpha,
                                              horizon=p["horizon"],
                                              step=p["step"],
                                              method=p["method"])
        return name, alpha, dev
    results = _parallel_map(one, jobs, threads)
    writer.write_csv("covariance.csv", ("model", "alpha", "deviation"),
                     [(n, a, d) for n, a, d in results])
    return {
        "max_deviation": max(d for _, _, d in results),
        "n_cases": len(results),
    }, {}


_RUNNERS = {
    "power-law-recovery": _run_power_law_recovery,
    "condition-suite": _run_condition_suite,
    "residual-depth-sweep": _run_residual_depth_sweep,
    "mixing-sweep": _run_mixing_sweep,
    "gronwall-check": _run_gronwall_check,
    "covariance-check": _run_covariance_check,
}


def run_recipe(recipe: ExperimentRecipe, out_dir=None, threads: int = 1) -> dict:
    """Execute a validated recipe; returns the manifest dict.

    On failure an ``error.json`` is written to the run directory and the
    exception propagates (the CLI maps it to exit code 1).  Success means
    every artifact was written and digested; partial results are never
    reported as success.
    """
    target = Path(out_dir or recipe.out_dir or f"runs/{recipe.name}")
    writer = RunWriter(target)
    try:
        result = _RUNNERS[recipe.name](recipe, writer, threads)
        if isinstance(result, tuple):
            summary, seeds = result
        else:
            summary, seeds = result, {}
    except Exception as exc:
        (writer.dir / "error.json").write_text(json.dumps({
            "recipe": recipe.name,
            "error": type(exc).__name__,
            "message": str(exc),
        }, indent=2) + "\n")
        raise
    return writer.finalize(recipe, seeds, _jsonable(summary))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
