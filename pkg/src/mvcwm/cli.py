"""Command-line front end: data ingestion, configuration, grid fitting,
model selection, simulation, and machine-readable reports.

Subcommands
-----------
fit
    Fit a single model to a data file and write its result.
select
    Fit a grid of candidate models (family pairs x component counts) and
    rank them by BIC.
simulate
    Generate a dataset from a named built-in scenario.
study
    Run a parameter-recovery or classification simulation study.

Data travel as long-format CSV with header ``obs,block,row,col,value``
(block Y for responses, X for covariates).  Every command reads an
optional JSON configuration file (``--config``); each flag has a config
twin of the same name with dashes replaced by underscores, and flags win
over config values.  Exit codes: 0 on success, 2 for configuration or
input validation problems, 3 when every requested fit failed numerically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
from joblib import Parallel, delayed

from .densities import Family, GhTail, NigTail, SkewTTail, VgTail
from .ecm import (
    ComponentParams,
    FitControls,
    FitResult,
    MatrixData,
    ModelFitError,
    ModelParams,
    ModelSpec,
    fit,
)
from .evaluate import SelectionReport, SelectionRow, selection_row
from .simulate import (
    Scenario,
    builtin_scenarios,
    classification_study,
    recovery_study,
    skew_transform,
    summarize_study,
)
from .specialfn import spd_factorize

__all__ = [
    "UsageError",
    "ingest",
    "write_long_csv",
    "params_to_dict",
    "params_from_dict",
    "fit_result_to_dict",
    "selection_report_to_dict",
    "selection_report_from_dict",
    "load_selection_report",
    "main",
]

logger = logging.getLogger(__name__)

_CSV_HEADER = ["obs", "block", "row", "col", "value"]

_TAIL_TYPES = {
    Family.SKEW_T: SkewTTail,
    Family.GENERALIZED_HYPERBOLIC: GhTail,
    Family.VARIANCE_GAMMA: VgTail,
    Family.NORMAL_INVERSE_GAUSSIAN: NigTail,
}


class UsageError(ValueError):
    """Configuration, flag, or input-file problem (exit code 2)."""


# ---------------------------------------------------------------------------
# data files


def ingest(path) -> MatrixData:
    """Parse a long-format CSV into paired response/covariate stacks.

    The file must contain every (observation, row, column) cell of each
    block exactly once; observations must agree across blocks.  A file
    with no X cells yields an intercept-only covariate stack (q = 0).
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"data file {path} does not exist")
    cells = {"Y": {}, "X": {}}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise UsageError(
                f"{path}: expected header {','.join(_CSV_HEADER)}, got "
                f"{None if header is None else ','.join(header)}"
            )
        for lineno, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 5:
                raise UsageError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            obs_s, block, row_s, col_s, value_s = parts
            if block not in cells:
                raise UsageError(f"{path}:{lineno}: block must be Y or X, got {block!r}")
            try:
                key = (int(obs_s), int(row_s), int(col_s))
                value = float(value_s)
            except ValueError:
                raise UsageError(
                    f"{path}:{lineno}: obs/row/col must be integers and value numeric"
                ) from None
            if key in cells[block]:
                raise UsageError(
                    f"{path}:{lineno}: duplicate cell (observation {key[0]}, "
                    f"block {block}, row {key[1]}, column {key[2]})"
                )
            cells[block][key] = value
    if not cells["Y"]:
        raise UsageError(f"{path}: no response (block Y) cells found")
    obs_ids = sorted({key[0] for block in cells.values() for key in block})

    def assemble(block_name):
        block = cells[block_name]
        row_ids = sorted({key[1] for key in block})
        col_ids = sorted({key[2] for key in block})
        arr = np.empty((len(obs_ids), len(row_ids), len(col_ids)))
        for oi, obs in enumerate(obs_ids):
            for ri, row in enumerate(row_ids):
                for ci, col in enumerate(col_ids):
                    try:
                        arr[oi, ri, ci] = block.pop((obs, row, col))
                    except KeyError:
                        raise UsageError(
                            f"{path}: missing cell (observation {obs}, block "
                            f"{block_name}, row {row}, column {col})"
                        ) from None
        return arr

    y = assemble("Y")
    x = assemble("X") if cells["X"] else np.zeros((len(obs_ids), 0, y.shape[2]))
    try:
        return MatrixData(y=y, x=x)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from None


def write_long_csv(data: MatrixData, path) -> None:
    """Write paired stacks in the long format that :func:`ingest` reads.

    Values are written with shortest round-trip precision, so a
    write/ingest cycle reproduces the arrays bitwise.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for name, block in (("Y", data.y), ("X", data.x)):
            n, d, r = block.shape
            for i in range(n):
                for j in range(d):
                    for k in range(r):
                        writer.writerow([i, name, j, k, repr(float(block[i, j, k]))])


# ---------------------------------------------------------------------------
# JSON serialization


def _spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "covariate_family": (
            spec.covariate_family.short_name if spec.covariate_family else None
        ),
        "response_family": spec.response_family.short_name,
        "n_components": spec.n_components,
        "p": spec.p,
        "q": spec.q,
        "r": spec.r,
    }


def _spec_from_dict(obj: dict) -> ModelSpec:
    cov = obj["covariate_family"]
    return ModelSpec(
        covariate_family=Family.parse(cov) if cov else None,
        response_family=Family.parse(obj["response_family"]),
        n_components=obj["n_components"],
        p=obj["p"], q=obj["q"], r=obj["r"],
    )


def _matrix_or_none(value):
    return None if value is None else np.asarray(value).tolist()


def _component_to_dict(comp: ComponentParams) -> dict:
    return {
        "weight": float(comp.weight),
        "coef": comp.coef.tolist(),
        "skew_y": comp.skew_y.tolist(),
        "row_scale_y": comp.row_scale_y.matrix.tolist(),
        "col_scale_y": comp.col_scale_y.matrix.tolist(),
        "tail_y": None if comp.tail_y is None else dataclasses.asdict(comp.tail_y),
        "mean_x": _matrix_or_none(comp.mean_x),
        "skew_x": _matrix_or_none(comp.skew_x),
        "row_scale_x": (
            None if comp.row_scale_x is None else comp.row_scale_x.matrix.tolist()
        ),
        "col_scale_x": (
            None if comp.col_scale_x is None else comp.col_scale_x.matrix.tolist()
        ),
        "tail_x": None if comp.tail_x is None else dataclasses.asdict(comp.tail_x),
    }


def _tail_from_dict(family: Optional[Family], obj):
    if obj is None:
        return None
    return _TAIL_TYPES[family](**obj)


def _component_from_dict(obj: dict, spec: ModelSpec) -> ComponentParams:
    def arr(value):
        return None if value is None else np.asarray(value, dtype=float)

    def factor(value, name):
        return None if value is None else spd_factorize(
            np.asarray(value, dtype=float), name=name
        )

    return ComponentParams(
        weight=float(obj["weight"]),
        coef=np.asarray(obj["coef"], dtype=float),
        skew_y=np.asarray(obj["skew_y"], dtype=float),
        row_scale_y=factor(obj["row_scale_y"], "row scale"),
        col_scale_y=factor(obj["col_scale_y"], "column scale"),
        tail_y=_tail_from_dict(spec.response_family, obj["tail_y"]),
        mean_x=arr(obj["mean_x"]),
        skew_x=arr(obj["skew_x"]),
        row_scale_x=factor(obj["row_scale_x"], "row scale"),
        col_scale_x=factor(obj["col_scale_x"], "column scale"),
        tail_x=_tail_from_dict(spec.covariate_family, obj["tail_x"]),
    )


def params_to_dict(params: ModelParams) -> dict:
    """JSON-ready dictionary of a full parameter set."""
    return {
        "spec": _spec_to_dict(params.spec),
        "components": [_component_to_dict(c) for c in params.components],
    }


def params_from_dict(obj: dict) -> ModelParams:
    """Inverse of :func:`params_to_dict`."""
    spec = _spec_from_dict(obj["spec"])
    return ModelParams(
        spec=spec,
        components=tuple(_component_from_dict(c, spec) for c in obj["components"]),
    )


def fit_result_to_dict(spec: ModelSpec, result: FitResult) -> dict:
    """JSON-ready summary of one fit (written as ``result.json``)."""
    return {
        "model": spec.describe(),
        "loglik": float(result.loglik),
        "bic": float(result.bic),
        "n_free_params": int(result.n_free_params),
        "converged": bool(result.converged),
        "n_iter": int(result.n_iter),
        "loglik_trace": [float(v) for v in result.loglik_trace],
        "labels": [int(v) for v in result.labels],
        "params": params_to_dict(result.params),
    }


def selection_report_to_dict(report: SelectionReport) -> dict:
    return {
        "rows": [dataclasses.asdict(row) for row in report.rows],
        "failures": [list(pair) for pair in report.failures],
    }


def selection_report_from_dict(obj: dict) -> SelectionReport:
    return SelectionReport(
        rows=tuple(SelectionRow(**row) for row in obj["rows"]),
        failures=tuple((name, reason) for name, reason in obj["failures"]),
    )


def load_selection_report(path) -> SelectionReport:
    """Read a ``selection.json`` written by the select command."""
    with open(path) as fh:
        return selection_report_from_dict(json.load(fh))


_SCHEMA_CACHE = {}


def _schema(name: str) -> dict:
    if name not in _SCHEMA_CACHE:
        text = resources.files("mvcwm").joinpath(f"schemas/{name}").read_text()
        _SCHEMA_CACHE[name] = json.loads(text)
    return _SCHEMA_CACHE[name]


def _write_json(path: Path, obj: dict, schema_name: str) -> None:
    jsonschema.validate(obj, _schema(schema_name))
    path.write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# configuration


_CONFIG_KEYS = (
    "data", "families", "g_min", "g_max", "fmr", "tol", "max_iter", "seed",
    "starts", "jobs", "out", "scenario", "eps", "replicates", "kind", "n_obs",
)


def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path}: invalid JSON ({err})") from None
    try:
        jsonschema.validate(obj, _schema("config.schema.json"))
    except jsonschema.ValidationError as err:
        raise UsageError(f"config file {path}: {err.message}") from None
    return obj


def _merged_options(args: argparse.Namespace) -> dict:
    """Flag values over config-file values over None."""
    config = _load_config_file(args.config) if args.config else {}
    merged = {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else config.get(key)
    return merged


def _option(merged, key, default=None, required_for=None):
    value = merged[key]
    if value is None:
        if required_for is not None:
            flag = "--" + key.replace("_", "-")
            raise UsageError(f"{required_for} requires {flag} (or its config twin)")
        return default
    return value


def _controls_from(merged) -> FitControls:
    try:
        return FitControls(
            tol=_option(merged, "tol", 1e-6),
            max_iter=_option(merged, "max_iter", 500),
            n_starts=_option(merged, "starts", 10),
            seed=merged["seed"],
        )
    except ValueError as err:
        raise UsageError(str(err)) from None


def _family_tokens(merged, command) -> tuple:
    raw = _option(merged, "families", required_for=command)
    if isinstance(raw, str):
        tokens = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    else:
        tokens = tuple(str(tok) for tok in raw)
    if not tokens:
        raise UsageError("families must name at least one model family")
    return tokens


def _build_pairs(tokens, fmr: bool) -> list:
    """Expand family tokens into (covariate, response) pairs.

    CWM pairs are written ``COV-RESP`` (e.g. ``normal-vg``); under
    ``--fmr`` a bare response family (e.g. ``vg``).  The prefix form
    ``fmr-vg`` requests a regression mixture regardless of the flag, and
    ``all`` expands to the full grid.
    """
    pairs = []
    try:
        for token in tokens:
            if token == "all":
                if fmr:
                    pairs.extend((None, fam) for fam in Family)
                else:
                    pairs.extend((cf, rf) for cf in Family for rf in Family)
                continue
            parts = token.split("-")
            if parts[0] == "fmr" and len(parts) == 2:
                pairs.append((None, Family.parse(parts[1])))
            elif fmr:
                if len(parts) != 1:
                    raise UsageError(
                        f"family token {token!r}: regression mixtures take a single "
                        "response family, e.g. vg"
                    )
                pairs.append((None, Family.parse(token)))
            elif len(parts) == 2:
                pairs.append((Family.parse(parts[0]), Family.parse(parts[1])))
            else:
                raise UsageError(
                    f"family token {token!r} must be COVARIATE-RESPONSE (e.g. "
                    "normal-vg), fmr-RESPONSE, or 'all'"
                )
    except UsageError:
        raise
    except ValueError as err:
        raise UsageError(str(err)) from None
    unique = []
    for pair in pairs:
        if pair not in unique:
            unique.append(pair)
    return unique


def _component_range(merged, default_max: int) -> range:
    g_min = _option(merged, "g_min", 1)
    g_max = _option(merged, "g_max", max(g_min, default_max))
    if g_min < 1 or g_max < g_min:
        raise UsageError(
            f"component range {g_min}..{g_max} is empty; need 1 <= g-min <= g-max"
        )
    return range(g_min, g_max + 1)


def _grid_specs(pairs, g_range, dims) -> list:
    p, q, r = dims
    specs = []
    for cov_fam, resp_fam in pairs:
        for g in g_range:
            specs.append(ModelSpec(cov_fam, resp_fam, g, p, q, r))
    return specs


# ---------------------------------------------------------------------------
# grid execution and output


def _run_grid(data: MatrixData, specs, merged):
    """Fit every spec with its own derived seed; jobs > 1 runs them in a
    thread pool (seeds are derived per task, so reports do not depend on
    the parallelism degree)."""
    base = _controls_from(merged)
    jobs = _option(merged, "jobs", 1)
    root = np.random.default_rng(merged["seed"])
    task_seeds = [int(root.integers(0, 2**63 - 1)) for _ in specs]

    def one(spec, task_seed):
        controls = FitControls(
            tol=base.tol, max_iter=base.max_iter, n_starts=base.n_starts,
            seed=task_seed, ridge=base.ridge,
        )
        try:
            return fit(data, spec, controls), None
        except ModelFitError as err:
            return None, str(err)

    if jobs == 1:
        outcomes = [one(spec, seed) for spec, seed in zip(specs, task_seeds)]
    else:
        outcomes = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(one)(spec, seed) for spec, seed in zip(specs, task_seeds)
        )
    rows, failures, fits = [], [], {}
    for spec, (result, reason) in zip(specs, outcomes):
        name = spec.describe()
        if result is None:
            logger.warning("candidate %s failed: %s", name, reason)
            failures.append((name, reason))
        else:
            rows.append(selection_row(spec, result))
            fits[name] = result
    report = SelectionReport(rows=tuple(rows), failures=tuple(failures))
    return report, fits


def _out_dir(merged, command) -> Path:
    out = _option(merged, "out", required_for=command)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_selection_outputs(outdir: Path, report, fits, specs) -> None:
    by_name = {spec.describe(): spec for spec in specs}
    for name, result in fits.items():
        model_dir = outdir / name
        model_dir.mkdir(exist_ok=True)
        _write_json(
            model_dir / "result.json",
            fit_result_to_dict(by_name[name], result),
            "result.schema.json",
        )
    table = sorted(report.as_table(), key=lambda row: row["bic"], reverse=True)
    fieldnames = [
        "model", "covariate_family", "response_family", "n_components",
        "loglik", "n_free_params", "bic", "converged", "n_iter",
    ]
    with open(outdir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(table)
    _write_json(
        outdir / "selection.json", selection_report_to_dict(report),
        "selection.schema.json",
    )


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_fit(merged) -> int:
    data = ingest(_option(merged, "data", required_for="fit"))
    pairs = _build_pairs(_family_tokens(merged, "fit"), bool(_option(merged, "fmr", False)))
    specs = _grid_specs(pairs, _component_range(merged, default_max=1), data.dims)
    if len(specs) != 1:
        raise UsageError(
            f"fit runs exactly one model, got {len(specs)}; use select for grids"
        )
    outdir = _out_dir(merged, "fit")
    report, fits = _run_grid(data, specs, merged)
    _write_selection_outputs(outdir, report, fits, specs)
    if not fits:
        print(f"error: {report.failures[0][1]}", file=sys.stderr)
        return 3
    row = report.rows[0]
    print(f"fitted {row.model}: loglik {row.loglik:.4f}, BIC {row.bic:.4f}, "
          f"{'converged' if row.converged else 'iteration cap reached'}")
    return 0


def _cmd_select(merged) -> int:
    data = ingest(_option(merged, "data", required_for="select"))
    fmr = bool(_option(merged, "fmr", False))
    tokens = merged["families"] if merged["families"] is not None else "all"
    merged = dict(merged, families=tokens)
    pairs = _build_pairs(_family_tokens(merged, "select"), fmr)
    g_range = _component_range(merged, default_max=3)
    specs = _grid_specs(pairs, g_range, data.dims)
    outdir = _out_dir(merged, "select")
    report, fits = _run_grid(data, specs, merged)
    _write_selection_outputs(outdir, report, fits, specs)
    if not report.rows:
        print("error: every candidate fit failed; see selection.json",
              file=sys.stderr)
        return 3
    best = report.best
    print(f"best by BIC: {best.model} (BIC {best.bic:.4f}) "
          f"out of {len(report.rows)} fitted / {len(specs)} requested")
    return 0


def _scenario_from(merged, command) -> Scenario:
    scenarios = builtin_scenarios()
    name = _option(merged, "scenario", required_for=command)
    if name not in scenarios:
        raise UsageError(
            f"unknown scenario {name!r}; choose from " + ", ".join(sorted(scenarios))
        )
    scenario = scenarios[name]
    n_obs = merged["n_obs"]
    if n_obs is not None:
        scenario = dataclasses.replace(scenario, n_obs=int(n_obs))
    return scenario


def _cmd_simulate(merged) -> int:
    scenario = _scenario_from(merged, "simulate")
    eps = merged["eps"]
    seed = merged["seed"]
    outdir = _out_dir(merged, "simulate")
    data, labels = scenario.sample(seed)
    if eps is not None:
        try:
            data = skew_transform(data, float(eps))
        except ValueError as err:
            raise UsageError(str(err)) from None
    write_long_csv(data, outdir / "data.csv")
    with open(outdir / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["obs", "label"])
        writer.writerows(enumerate(int(v) for v in labels))
    _write_json(
        outdir / "truth.json",
        {
            "scenario": scenario.name,
            "n_obs": scenario.n_obs,
            "eps": None if eps is None else float(eps),
            "seed": seed,
            "params": params_to_dict(scenario.params),
        },
        "dataset.schema.json",
    )
    print(f"wrote {scenario.n_obs} observations of scenario {scenario.name} "
          f"to {outdir}")
    return 0


def _replicates(merged) -> int:
    reps = _option(merged, "replicates", required_for="study")
    if reps < 1:
        raise UsageError("study needs at least one replicate")
    return reps


def _cmd_study(merged) -> int:
    kind = _option(merged, "kind", required_for="study")
    if kind == "recovery":
        return _study_recovery(merged)
    return _study_classification(merged)


def _study_recovery(merged) -> int:
    scenario = _scenario_from(merged, "recovery study")
    reps = _replicates(merged)
    outdir = _out_dir(merged, "study")
    try:
        outcome = recovery_study(
            scenario, reps, seed=merged["seed"], controls=_controls_from(merged)
        )
    except ValueError as err:
        # every replicate excluded: nothing to average
        print(f"error: {err}", file=sys.stderr)
        return 3
    _write_json(
        outdir / "study.json",
        {
            "kind": "recovery",
            "scenario": outcome.scenario,
            "n_reps": outcome.n_reps,
            "n_excluded": outcome.n_excluded,
            "mse": outcome.mse.tolist(),
            "failures": [[rep, reason] for rep, reason in outcome.failures],
        },
        "study.schema.json",
    )
    with open(outdir / "study.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "coef_row", "coef_col", "mse"])
        n_comp, n_rows, n_cols = outcome.mse.shape
        for g in range(n_comp):
            for j in range(n_rows):
                for k in range(n_cols):
                    writer.writerow([g, j, k, repr(float(outcome.mse[g, j, k]))])
    print(f"recovery study on {outcome.scenario}: max coefficient MSE "
          f"{float(outcome.mse.max()):.4g} over {reps} replicates "
          f"({outcome.n_excluded} excluded)")
    return 0


def _study_classification(merged) -> int:
    scenario = (
        _scenario_from(merged, "classification study")
        if merged["scenario"] is not None
        else builtin_scenarios()["normal-normal_wide_n200"]
    )
    reps = _replicates(merged)
    pairs = _build_pairs(
        _family_tokens(merged, "classification study"),
        bool(_option(merged, "fmr", False)),
    )
    g_range = _component_range(merged, default_max=4)
    dims = (scenario.params.spec.p, scenario.params.spec.q, scenario.params.spec.r)
    specs = _grid_specs(pairs, g_range, dims)
    eps = merged["eps"]
    outdir = _out_dir(merged, "study")
    replications = classification_study(
        specs, reps, eps=None if eps is None else float(eps),
        scenario=scenario, seed=merged["seed"], controls=_controls_from(merged),
    )
    rows = summarize_study(replications)
    json_rows = [
        {
            "pair": row["pair"],
            "n_reps": row["n_reps"],
            "mean_ari": row["mean_ari"],
            "selection_counts": {
                str(g): count for g, count in row["selection_counts"].items()
            },
        }
        for row in rows
    ]
    _write_json(
        outdir / "study.json",
        {
            "kind": "classification",
            "scenario": scenario.name,
            "eps": None if eps is None else float(eps),
            "n_reps": reps,
            "rows": json_rows,
        },
        "study.schema.json",
    )
    with open(outdir / "study.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "n_reps", "mean_ari", "selection_counts"])
        for row in rows:
            counts = ";".join(
                f"{g}:{count}" for g, count in row["selection_counts"].items()
            )
            writer.writerow([row["pair"], row["n_reps"],
                             repr(float(row["mean_ari"])), counts])
    for row in rows:
        print(f"{row['pair']}: mean ARI {row['mean_ari']:.3f}, "
              f"selections {row['selection_counts']}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_shared(parser):
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--tol", type=float,
                        help="log-likelihood convergence tolerance (default 1e-6)")
    parser.add_argument("--max-iter", type=int, dest="max_iter",
                        help="iteration cap per start (default 500)")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--starts", type=int,
                        help="starts per fit (default 10)")
    parser.add_argument("--jobs", type=int,
                        help="parallel workers over the model grid (default 1)")
    parser.add_argument("--out", help="output directory")


def _add_grid_flags(parser):
    parser.add_argument("--families",
                        help="comma-separated family tokens: COV-RESP pairs "
                             "(normal-vg), fmr-RESP, or 'all'")
    parser.add_argument("--g-min", type=int, dest="g_min",
                        help="smallest component count (default 1)")
    parser.add_argument("--g-max", type=int, dest="g_max",
                        help="largest component count")
    parser.add_argument("--fmr", action="store_const", const=True,
                        help="treat bare family tokens as regression mixtures "
                             "(no covariate marginal)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvcwm",
        description="Mixtures of matrix-variate regressions with cluster "
                    "weights: fitting, selection, and simulation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model to a data file")
    p_fit.add_argument("--data", help="long-format CSV (obs,block,row,col,value)")
    _add_grid_flags(p_fit)
    _add_shared(p_fit)

    p_select = sub.add_parser("select", help="fit a model grid and rank by BIC")
    p_select.add_argument("--data", help="long-format CSV (obs,block,row,col,value)")
    _add_grid_flags(p_select)
    _add_shared(p_select)

    p_sim = sub.add_parser("simulate", help="generate data from a built-in scenario")
    p_sim.add_argument("--scenario", help="scenario name (see docs or pass a bad "
                                          "name to list them)")
    p_sim.add_argument("--eps", type=float,
                       help="apply the exponential skewing transform")
    p_sim.add_argument("--n-obs", type=int, dest="n_obs",
                       help="override the scenario's sample size")
    _add_shared(p_sim)

    p_study = sub.add_parser("study", help="run a simulation study")
    p_study.add_argument("--kind", choices=["recovery", "classification"],
                         help="study design")
    p_study.add_argument("--scenario", help="scenario name")
    p_study.add_argument("--eps", type=float,
                         help="skewing transform strength (classification)")
    p_study.add_argument("--replicates", type=int, help="number of replicates")
    p_study.add_argument("--n-obs", type=int, dest="n_obs",
                         help="override the scenario's sample size")
    _add_grid_flags(p_study)
    _add_shared(p_study)

    return parser


_HANDLERS = {
    "fit": _cmd_fit,
    "select": _cmd_select,
    "simulate": _cmd_simulate,
    "study": _cmd_study,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        merged = _merged_options(args)
        return _HANDLERS[args.command](merged)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
