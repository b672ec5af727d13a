"""Command-line interface.

Subcommands: simulate, fit, replicate, dic-compare and summarize.  Every
option can also come from a flat ``key = value`` config file given with
``--config``; flags on the command line take precedence.  The resolved
configuration is echoed into each run's JSON output.

Exit codes: 0 success, 1 invalid input, 2 numeric failure, 3 study failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Callable

from . import __version__
from .chain import read_chain_csv, write_chain_csv
from .diagnostics import (
    condition_on_modal_k,
    default_grid,
    dic,
    predictive_density,
    summarize_chain,
    write_json,
    write_predictive_csv,
)
from .errors import InvalidInputError, NumericFailureError, StudyFailureError
from .gibbs import McmcConfig, run_fixed_k
from .model import PRIOR_FIELDS, Dataset, Scenario, default_prior, read_dataset_csv, simulate_dataset, write_dataset_csv
from .replication import (
    OracleSampler,
    default_workers,
    run_replication_study,
    scenario_by_name,
    write_metrics,
)
from .rjmcmc import MoveProbabilities, run_rj

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_STUDY = 0, 1, 2, 3


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class Option:
    type: Callable[[str], object]
    help: str
    default: object = None


OPTIONS: dict[str, Option] = {
    "data": Option(str, "input data CSV (single column)"),
    "scenario": Option(str, "builtin scenario: heterogeneous, homogeneous, k3 or k5"),
    "w": Option(_floats, "comma-separated true weights for an inline scenario"),
    "mu": Option(_floats, "comma-separated true means for an inline scenario"),
    "sigma2": Option(_floats, "comma-separated true variances for an inline scenario"),
    "n": Option(int, "number of observations to simulate"),
    "mode": Option(str, "sampler: fixed (known k) or rj (unknown k)", "rj"),
    "k": Option(int, "number of components in fixed mode"),
    "k_list": Option(_ints, "comma-separated k values for dic-compare", (2, 3, 4)),
    "rj": Option(_bool, "dic-compare: add an unknown-k fit", False),
    "n_sweeps": Option(int, "total sweeps", 50_000),
    "burn_in": Option(int, "sweeps discarded before recording", 10_000),
    "thin": Option(int, "record every thin-th sweep after burn-in", 10),
    "seed": Option(int, "master seed", 0),
    "data_seed": Option(int, "seed for simulating a scenario dataset (defaults to seed)"),
    "gamma": Option(float, "Dirichlet parameter of the weights", 1.0),
    "mu_a": Option(float, "prior mean of the component means (default: data midpoint)"),
    "sigma_a2": Option(float, "prior variance of the component means (default: R^2)"),
    "alpha": Option(float, "shape of the precision prior", 2.0),
    "g": Option(float, "shape of the beta prior", 0.2),
    "h": Option(float, "rate of the beta prior (default: 10 / R^2)"),
    "k_max": Option(int, "largest number of components", 10),
    "p_up": Option(float, "probability of split or birth when 1 < k < k_max", 0.5),
    "split_a": Option(float, "Beta parameter of the split auxiliaries u1, u2", 2.0),
    "split_c": Option(float, "Beta parameter of the split auxiliary u3", 1.0),
    "grid_points": Option(int, "points in the predictive-density grid", 512),
    "grid_margin": Option(float, "grid extends this multiple of R beyond the data", 0.5),
    "level": Option(float, "credible-interval level", 0.95),
    "replications": Option(int, "number of replications R"),
    "workers": Option(int, "parallel worker processes (default: available cores)"),
    "oracle_stub": Option(_bool, "replicate with a sampler that returns the truth", False),
    "chain": Option(str, "chain CSV written by fit"),
    "out": Option(str, "output file (simulate) or directory"),
}

COMMAND_KEYS = {
    "simulate": ("scenario", "w", "mu", "sigma2", "n", "seed", "out"),
    "fit": (
        "data", "scenario", "data_seed", "mode", "k", "n_sweeps", "burn_in", "thin", "seed",
        *PRIOR_FIELDS, "p_up", "split_a", "split_c", "grid_points", "grid_margin", "level", "out",
    ),
    "replicate": (
        "scenario", "mode", "n_sweeps", "burn_in", "thin", "seed", *PRIOR_FIELDS,
        "p_up", "split_a", "split_c", "level", "replications", "workers", "oracle_stub", "out",
    ),
    "dic-compare": (
        "data", "scenario", "data_seed", "k_list", "rj", "n_sweeps", "burn_in", "thin", "seed",
        *PRIOR_FIELDS, "p_up", "split_a", "split_c", "out",
    ),
    "summarize": ("chain", "data", "scenario", "data_seed", "seed", "grid_points", "grid_margin", "level", "out"),
}


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors (exit 1); exit 2 is reserved for numeric failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rjmix", description="Bayesian normal mixtures with Gibbs and reversible-jump samplers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    descriptions = {
        "simulate": "simulate a dataset from a scenario",
        "fit": "fit a mixture and write chain, summary and predictive density",
        "replicate": "run a replication study and write its metrics table",
        "dic-compare": "compare DIC across fixed k (and optionally unknown k)",
        "summarize": "recompute summaries from an existing chain CSV",
    }
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command, help=descriptions[command], description=descriptions[command])
        p.add_argument("--config", help="flat key = value file; command-line flags take precedence")
        for key in keys:
            opt = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            helptext = opt.help if opt.default is None else f"{opt.help} (default: {_show(opt.default)})"
            if key == "replications":
                p.add_argument(flag, "-R", dest=key, type=opt.type, default=None, help=helptext)
            else:
                p.add_argument(flag, dest=key, type=opt.type, default=None, help=helptext)
    return parser


def _show(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def read_config_file(path, allowed) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Errors carry line numbers."""
    values, errors = {}, []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{path}:{lineno}: expected key = value")
            continue
        key, text = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            errors.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = OPTIONS[key].type(text)
        except ValueError as exc:
            errors.append(f"{path}:{lineno}: bad value for {key}: {exc}")
    if errors:
        raise InvalidInputError("\n".join(errors))
    return values


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then command-line flags."""
    keys = COMMAND_KEYS[args.command]
    merged = {key: OPTIONS[key].default for key in keys}
    if args.config:
        merged.update(read_config_file(args.config, keys))
    merged.update({key: getattr(args, key) for key in keys if getattr(args, key) is not None})
    return merged


# ---------------------------------------------------------------------------
# validation


def _mcmc_errors(cfg: dict) -> list[str]:
    try:
        McmcConfig(cfg["n_sweeps"], cfg["burn_in"], cfg["thin"], cfg["seed"])
    except InvalidInputError as exc:
        return str(exc).split("; ")
    return []


def _prior_errors(cfg: dict) -> list[str]:
    errors = []
    for key in PRIOR_FIELDS:
        value = cfg.get(key)
        if value is None or key == "mu_a":
            continue
        if value <= 0:
            errors.append(f"{key} must be positive, got {value}")
    if cfg.get("k_max") is not None and cfg["k_max"] < 1:
        errors.append("k_max must be at least 1")
    return errors


def _move_errors(cfg: dict) -> list[str]:
    try:
        _moves(cfg)
    except InvalidInputError as exc:
        return [str(exc)]
    return []


def _source_errors(cfg: dict) -> list[str]:
    if (cfg.get("data") is None) == (cfg.get("scenario") is None):
        return ["exactly one of data and scenario must be given"]
    return []


def validate(command: str, cfg: dict) -> list[str]:
    """Every problem with the resolved configuration, not only the first."""
    errors: list[str] = []
    if command == "simulate":
        inline = [cfg.get(key) is not None for key in ("w", "mu", "sigma2")]
        if cfg.get("scenario") is None and not all(inline):
            errors.append("give a scenario name or all of w, mu and sigma2")
        if cfg.get("scenario") is not None and any(inline):
            errors.append("give either a scenario name or inline parameters, not both")
        if cfg.get("n") is not None and cfg["n"] < 1:
            errors.append(f"n must be positive, got {cfg['n']}")
        if cfg.get("out") is None:
            errors.append("out is required")
        return errors
    if command == "summarize":
        if cfg.get("chain") is None:
            errors.append("chain is required")
        errors += _source_errors(cfg)
    else:
        errors += _mcmc_errors(cfg) + _prior_errors(cfg) + _move_errors(cfg)
    if cfg.get("out") is None:
        errors.append("out is required")
    if command in ("fit", "dic-compare"):
        errors += _source_errors(cfg)
    if command == "fit":
        if cfg["mode"] not in ("fixed", "rj"):
            errors.append(f"mode must be fixed or rj, got {cfg['mode']!r}")
        if cfg["mode"] == "fixed" and cfg.get("k") is None:
            errors.append("fixed mode requires k")
        if cfg.get("k") is not None and not 1 <= cfg["k"] <= (cfg.get("k_max") or 10):
            errors.append(f"k must lie in 1..k_max, got {cfg['k']}")
    if command == "replicate":
        if cfg.get("scenario") is None:
            errors.append("scenario is required")
        if cfg["mode"] not in ("fixed", "rj"):
            errors.append(f"mode must be fixed or rj, got {cfg['mode']!r}")
        if cfg.get("replications") is None or cfg["replications"] < 1:
            errors.append(f"replications (R) must be at least 1, got {cfg.get('replications')}")
        if cfg.get("workers") is not None and cfg["workers"] < 1:
            errors.append(f"workers must be positive, got {cfg['workers']}")
    if command == "dic-compare":
        if not cfg["k_list"]:
            errors.append("k_list must name at least one k")
        bad = [k for k in cfg["k_list"] if not 1 <= k <= (cfg.get("k_max") or 10)]
        if bad:
            errors.append(f"k values outside 1..k_max: {bad}")
    if command in ("fit", "summarize") and cfg.get("grid_points") is not None and cfg["grid_points"] < 2:
        errors.append("grid_points must be at least 2")
    if cfg.get("level") is not None and not 0 < cfg["level"] < 1:
        errors.append(f"level must lie in (0, 1), got {cfg['level']}")
    return errors


# ---------------------------------------------------------------------------
# helpers


def _moves(cfg: dict) -> MoveProbabilities:
    return MoveProbabilities(cfg["p_up"], cfg["split_a"], cfg["split_c"])


def _prior_overrides(cfg: dict) -> dict:
    return {key: cfg[key] for key in PRIOR_FIELDS if cfg.get(key) is not None}


def _load_data(cfg: dict) -> Dataset:
    if cfg.get("data") is not None:
        return read_dataset_csv(cfg["data"])
    seed = cfg["data_seed"] if cfg.get("data_seed") is not None else cfg["seed"]
    data, _ = simulate_dataset(scenario_by_name(cfg["scenario"]), seed)
    return data


def _mcmc(cfg: dict) -> McmcConfig:
    return McmcConfig(cfg["n_sweeps"], cfg["burn_in"], cfg["thin"], cfg["seed"])


def _echo(cfg: dict) -> dict:
    return {key: (list(v) if isinstance(v, tuple) else v) for key, v in cfg.items()}


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {path}: {exc.strerror}") from None


def _fit(data: Dataset, cfg: dict, mode: str, k: int | None):
    prior = default_prior(data, **_prior_overrides(cfg))
    if mode == "fixed":
        return prior, run_fixed_k(data, prior, k, _mcmc(cfg))
    return prior, run_rj(data, prior, _mcmc(cfg), _moves(cfg))


def _write_summaries(out: str, chain, data: Dataset, cfg: dict, prior) -> dict:
    summary = summarize_chain(chain, data, cfg["level"])
    summary["config"] = _echo(cfg)
    summary["prior"] = {key: getattr(prior, key) for key in PRIOR_FIELDS}
    write_json(os.path.join(out, "summary.json"), summary)
    grid = default_grid(data, cfg["grid_points"], cfg["grid_margin"])
    density = predictive_density(condition_on_modal_k(chain), grid)
    write_predictive_csv(os.path.join(out, "predictive.csv"), grid, density)
    return summary


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict) -> int:
    if cfg.get("scenario") is not None:
        scenario = scenario_by_name(cfg["scenario"])
        if cfg.get("n") is not None:
            scenario = Scenario(scenario.true_w, scenario.true_mu, scenario.true_sigma2, cfg["n"], scenario.label)
    else:
        scenario = Scenario(cfg["w"], cfg["mu"], cfg["sigma2"], cfg["n"] or 100, "inline")
    data, z = simulate_dataset(scenario, cfg["seed"])
    out = cfg["out"]
    parent = os.path.dirname(os.path.abspath(out))
    _ensure_dir(parent)
    try:
        write_dataset_csv(out, data)
    except OSError as exc:
        raise InvalidInputError(f"cannot write {out}: {exc.strerror}") from None
    truth = {**scenario.to_dict(), "seed": cfg["seed"], "z": [int(v) + 1 for v in z], "config": _echo(cfg)}
    write_json(os.path.splitext(out)[0] + ".truth.json", truth)
    return EXIT_OK


def cmd_fit(cfg: dict) -> int:
    data = _load_data(cfg)
    _ensure_dir(cfg["out"])
    prior, chain = _fit(data, cfg, cfg["mode"], cfg.get("k"))
    write_chain_csv(os.path.join(cfg["out"], "chain.csv"), chain)
    summary = _write_summaries(cfg["out"], chain, data, cfg, prior)
    print(f"modal k = {summary['modal_k']}, DIC = {summary['dic']['dic']:.2f}")
    return EXIT_OK


def cmd_summarize(cfg: dict) -> int:
    data = _load_data(cfg)
    chain = read_chain_csv(cfg["chain"])
    _ensure_dir(cfg["out"])
    summary = summarize_chain(chain, data, cfg["level"])
    summary["config"] = _echo(cfg)
    write_json(os.path.join(cfg["out"], "summary.json"), summary)
    grid = default_grid(data, cfg["grid_points"], cfg["grid_margin"])
    write_predictive_csv(os.path.join(cfg["out"], "predictive.csv"), grid, predictive_density(condition_on_modal_k(chain), grid))
    return EXIT_OK


def cmd_replicate(cfg: dict) -> int:
    scenario = scenario_by_name(cfg["scenario"])
    _ensure_dir(cfg["out"])
    workers = cfg.get("workers") or default_workers()
    kwargs = {}
    if cfg["oracle_stub"]:
        kwargs["sampler"] = OracleSampler(scenario)
    echo = _echo({**cfg, "workers": workers})
    try:
        table = run_replication_study(
            scenario, _prior_overrides(cfg), _mcmc(cfg), cfg["replications"], cfg["mode"],
            master_seed=cfg["seed"], workers=workers, level=cfg["level"], **kwargs,
        )
    except StudyFailureError as exc:
        if exc.table is not None:
            write_metrics(cfg["out"], exc.table, echo)
        raise
    write_metrics(cfg["out"], table, echo)
    if table.k_recovery_rate is not None:
        print(f"k recovery rate = {table.k_recovery_rate:.3f} over {table.R} replications")
    return EXIT_OK


def cmd_dic_compare(cfg: dict) -> int:
    data = _load_data(cfg)
    _ensure_dir(cfg["out"])
    rows = []
    for k in cfg["k_list"]:
        _, chain = _fit(data, cfg, "fixed", k)
        rows.append(("fixed", k, dic(chain, data)))
    if cfg["rj"]:
        _, chain = _fit(data, cfg, "rj", None)
        conditioned = condition_on_modal_k(chain)
        rows.append(("rj", conditioned.ks[0], dic(conditioned, data)))
    with open(os.path.join(cfg["out"], "dic.csv"), "w", newline="") as fh:
        fh.write("model,k,d_bar,p_d,dic\n")
        for model, k, res in rows:
            fh.write(f"{model},{int(k)},{res.d_bar:.17g},{res.p_d:.17g},{res.dic:.17g}\n")
    write_json(os.path.join(cfg["out"], "dic.json"), {"config": _echo(cfg)})
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "replicate": cmd_replicate,
    "dic-compare": cmd_dic_compare,
    "summarize": cmd_summarize,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        errors = validate(args.command, cfg)
        if errors:
            raise InvalidInputError("\n".join(errors))
        return COMMANDS[args.command](cfg)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericFailureError as exc:
        where = f" at sweep {exc.sweep}" if exc.sweep is not None else ""
        print(f"numeric failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StudyFailureError as exc:
        print(f"study failure: {exc}", file=sys.stderr)
        return EXIT_STUDY


if __name__ == "__main__":
    sys.exit(main())
