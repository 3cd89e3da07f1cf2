from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from irg_ldp.app.experiments import (
    ExperimentConfig,
    RunRecord,
    exact_small_oracle,
    run_conditional,
    run_coupling_check,
    run_lln,
    run_naive_tail,
    run_planted_hubs,
)
from irg_ldp.config import LOG_LEVELS, SimulationSettings, parse_weights
from irg_ldp.domain.errors import (
    ConfigError,
    CouplingUnavailableError,
    DomainError,
    EstimationError,
)
from irg_ldp.domain.model import ModelParams
from irg_ldp.infrastructure.storage import (
    append_jsonl,
    dumps,
    read_plot_csv,
    stamp,
    write_json,
    write_plot_csv,
)
from irg_ldp.infrastructure.streams import StreamFactory
from irg_ldp.services.branching import (
    TreePool,
    build_pool,
    estimate_theta,
    theta_rank_one_oracle,
)
from irg_ldp.services.ldp import LdpQuantities, compute_quantities

logger = logging.getLogger(__name__)

JSONDict = dict[str, Any]
PlotColumns = list[tuple[str, str]]
PlotRows = list[list[float]]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
MODEL_DEFAULTS = {"alpha": 3.5, "sigma": 1.0, "q": 1.0, "w_min": 1.0}


def _common_parser(settings: SimulationSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--threads", type=int, default=settings.threads)
    parser.add_argument("--out", help="write the JSON result to this path")
    parser.add_argument(
        "--log-level",
        dest="log_level",
        type=str.upper,
        choices=LOG_LEVELS,
        default=settings.log_level,
    )
    return parser


def _model_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--q", type=float)
    parser.add_argument("--w-min", dest="w_min", type=float)
    return parser


def _experiment_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--reps", type=int, default=1)
    parser.add_argument("--rho", type=float, default=0.5)
    parser.add_argument("--ell-max", dest="ell_max", type=int, default=5)
    parser.add_argument("--method", choices=("pairwise", "bucketed"), default="pairwise")
    parser.add_argument("--run-store", dest="run_store", help="JSONL file for replications")
    parser.add_argument("--plot", help="write plot data as CSV to this path")
    return parser


def build_parser(settings: SimulationSettings) -> argparse.ArgumentParser:
    common = _common_parser(settings)
    model = _model_parser()
    experiment = _experiment_parser()

    parser = argparse.ArgumentParser(
        prog="irg-ldp",
        description="Large deviations of the giant component in scale-free random graphs.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    pool = commands.add_parser("pool", parents=[common, model], help="build a tree pool")
    pool.add_argument("--M", type=int, default=settings.pool_size)
    pool.add_argument("--cap", type=int, default=settings.size_cap)
    pool.add_argument(
        "--weight-store-cap",
        dest="weight_store_cap",
        type=int,
        default=settings.weight_store_cap,
    )
    pool.add_argument("--save", required=True, help="pool archive path")

    theta = commands.add_parser("theta", parents=[common], help="survival probability")
    theta.add_argument("--pool", required=True)

    hubs = commands.add_parser("hubs", parents=[common], help="number of hubs needed")
    hubs.add_argument("--pool", required=True)
    hubs.add_argument("--rho", type=float, required=True)

    constant = commands.add_parser("constant", parents=[common], help="leading tail constant")
    constant.add_argument("--pool", required=True)
    constant.add_argument("--rho", type=float, required=True)
    constant.add_argument("--draws", type=int, default=settings.draws)
    constant.add_argument("--phi-override", dest="phi_override", type=float)

    rate = commands.add_parser("rate", parents=[common], help="rate function over a rho sweep")
    rate.add_argument("--pool", required=True)
    rate.add_argument("--rho", type=float, nargs="*", default=[])
    rate.add_argument("--plot")

    lln = commands.add_parser("lln", parents=[common, model, experiment], help="typical giant")
    lln.add_argument("--pool")
    lln.add_argument(
        "--naive-tail",
        dest="naive_tail",
        action="store_true",
        help="estimate P(|C1| > rho n) by plain Monte Carlo instead",
    )

    plant = commands.add_parser("plant", parents=[common, model, experiment], help="planted hubs")
    plant.add_argument("--pool")
    plant.add_argument("--margin", type=float, default=0.05)
    plant.add_argument("--h", type=int)
    plant.add_argument("--mode", choices=("sample", "explicit", "none"), default="sample")
    plant.add_argument("--y", help="comma-separated hub weights in units of n")
    plant.add_argument(
        "--sufficiency-threshold", dest="sufficiency_threshold", type=float, default=0.9
    )
    plant.add_argument("--absence-threshold", dest="absence_threshold", type=float, default=0.02)
    plant.add_argument("--deficit-threshold", dest="deficit_threshold", type=float, default=0.05)

    conditional = commands.add_parser(
        "conditional", parents=[common, model, experiment], help="hubs conditioned on Y"
    )
    conditional.add_argument("--pool", required=True)
    conditional.add_argument("--draws", type=int, default=settings.draws)
    conditional.add_argument("--s-points", dest="s_points", type=int, default=21)

    couple = commands.add_parser(
        "couple", parents=[common, model, experiment], help="delta-IRG coupling check"
    )
    couple.add_argument("--pool")
    couple.add_argument("--delta", type=float, default=0.05)
    couple.add_argument("--R", type=float, default=4.0)
    couple.add_argument("--eps", type=float, default=0.5)

    oracle = commands.add_parser("oracle", parents=[common, model], help="exact small-n law")
    oracle.add_argument("--n", type=int, required=True)
    oracle.add_argument("--weights", required=True, help="comma-separated vertex weights")
    oracle.add_argument("--n-model", dest="n_model", type=int)

    return parser


def _params_from_args(args: argparse.Namespace, pool: TreePool | None = None) -> ModelParams:
    given = {key: getattr(args, key, None) for key in MODEL_DEFAULTS}
    if pool is None:
        merged = {
            key: MODEL_DEFAULTS[key] if value is None else value for key, value in given.items()
        }
        return ModelParams.from_dict(merged)

    pooled = pool.params.to_dict()
    clashes = [key for key, value in given.items() if value is not None and value != pooled[key]]
    if clashes:
        raise DomainError(f"{', '.join(clashes)} given on the command line differ from the pool")
    return pool.params


def _load_pool(path: str | None) -> TreePool | None:
    if path is None:
        return None
    if not Path(path).is_file():
        raise ConfigError(f"pool file not found: {path}")
    try:
        return TreePool.load(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read pool {path}: {exc}") from exc


def _require_pool(path: str) -> TreePool:
    pool = _load_pool(path)
    assert pool is not None
    return pool


def _experiment_config(
    args: argparse.Namespace,
    params: ModelParams,
    pool_ref: str | None,
    **extra: Any,
) -> ExperimentConfig:
    return ExperimentConfig(
        params=params,
        n=args.n,
        replications=args.reps,
        rho=args.rho,
        seed=args.seed,
        ell_max=args.ell_max,
        pool_ref=pool_ref,
        method=args.method,
        workers=args.threads,
        **extra,
    )


def plot_table(record: RunRecord | Sequence[LdpQuantities]) -> tuple[PlotColumns, PlotRows]:
    """Stable columns and rows for a run record or a sweep of tail quantities."""
    if isinstance(record, RunRecord):
        if record.kind == "conditional":
            columns = [
                ("s", "threshold on |C1| / n"),
                ("empirical_survival", "fraction of replications with |C1| / n > s"),
                ("C_ratio", "C_s / C_rho, the limiting conditional survival"),
            ]
            data = record.comparisons
            rows = [
                [s, survival, ratio]
                for s, survival, ratio in zip(
                    data["s"], data["empirical_survival"], data["C_ratio"]
                )
            ]
            return columns, rows

        columns = [
            ("replication", "replication index"),
            ("largest_fraction", "|C1| / n"),
        ]
        with_success = record.success_fraction is not None
        if with_success:
            columns.append(("success", "1 when |C1| > rho n"))
        rows = []
        for rep in record.replications:
            row = [float(rep.index), rep.largest_fraction]
            if with_success:
                row.append(1.0 if rep.success else 0.0)
            rows.append(row)
        return columns, rows

    columns = [
        ("rho", "target giant proportion"),
        ("hubs_value", "real number of hubs solving the hub equation"),
        ("hubs_ceil", "hubs rounded up, the polynomial order of the tail"),
        ("rate", "(alpha - 1) * hubs_ceil, infinite below the typical proportion"),
        ("theta_hat", "survival probability of the branching process"),
        ("C", "leading constant of the upper tail, 0 when not estimated"),
    ]
    rows = [
        [
            item.rho,
            item.hubs_value,
            float(item.hubs_ceil),
            item.rate,
            item.theta_hat,
            item.C_estimate.value if item.C_estimate is not None else 0.0,
        ]
        for item in record
    ]
    return columns, rows


def emit_plot_data(record: RunRecord | Sequence[LdpQuantities], path: str | Path) -> None:
    columns, rows = plot_table(record)
    write_plot_csv(path, columns, rows)
    logger.info("wrote %d plot rows to %s", len(rows), path)


def read_plot_data(path: str | Path) -> tuple[list[str], PlotRows]:
    return read_plot_csv(path)


def _emit(args: argparse.Namespace, payload: JSONDict) -> None:
    record = stamp({"command": args.command, "seed": args.seed, **payload})
    if args.out:
        write_json(args.out, record)
    print(dumps(record))


def _store_run(args: argparse.Namespace, record: RunRecord, settings: SimulationSettings) -> None:
    store = args.run_store or str(Path(settings.results_dir) / f"{args.command}.jsonl")
    append_jsonl(store, [stamp(item) for item in record.replication_records()])
    if args.plot:
        emit_plot_data(record, args.plot)


def _run_pool(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    params = _params_from_args(args)
    pool = build_pool(
        params,
        args.M,
        args.cap,
        StreamFactory(args.seed),
        weight_store_cap=args.weight_store_cap,
        workers=args.threads,
    )
    pool.save(args.save)
    return {"pool": pool.header(), "theta": estimate_theta(pool).to_dict(), "path": args.save}


def _run_theta(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    pool = _require_pool(args.pool)
    payload: JSONDict = {"params": pool.params.to_dict(), **estimate_theta(pool).to_dict()}
    if pool.params.sigma == 1:
        payload["theta_oracle"] = theta_rank_one_oracle(pool.params)
    return payload


def _run_hubs(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    pool = _require_pool(args.pool)
    quantities = compute_quantities(
        args.rho, pool, settings.draws, StreamFactory(args.seed), estimate_constant=False
    )
    data = quantities.to_dict()
    return {key: data[key] for key in ("rho", "hubs_value", "hubs_ceil", "theta_hat", "status")}


def _run_constant(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    pool = _require_pool(args.pool)
    quantities = compute_quantities(
        args.rho,
        pool,
        args.draws,
        StreamFactory(args.seed),
        phi_override=args.phi_override,
        workers=args.threads,
    )
    return quantities.to_dict()


def _run_rate(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    pool = _require_pool(args.pool)
    streams = StreamFactory(args.seed)
    sweep = [
        compute_quantities(rho, pool, settings.draws, streams, estimate_constant=False)
        for rho in args.rho
    ]
    if args.plot:
        emit_plot_data(sweep, args.plot)
    return {"params": pool.params.to_dict(), "sweep": [item.to_dict() for item in sweep]}


def _run_experiment(
    runner: Callable[[argparse.Namespace, SimulationSettings], RunRecord],
) -> Callable[[argparse.Namespace, SimulationSettings], JSONDict]:
    def run(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
        record = runner(args, settings)
        _store_run(args, record, settings)
        return record.to_dict()

    return run


def _lln(args: argparse.Namespace, settings: SimulationSettings) -> RunRecord:
    pool = _load_pool(args.pool)
    cfg = _experiment_config(args, _params_from_args(args, pool), args.pool)
    if args.naive_tail:
        if pool is None:
            raise ConfigError("--naive-tail needs --pool")
        return run_naive_tail(cfg, pool)
    return run_lln(cfg, pool)


def _plant(args: argparse.Namespace, settings: SimulationSettings) -> RunRecord:
    pool = _load_pool(args.pool)
    cfg = _experiment_config(
        args,
        _params_from_args(args, pool),
        args.pool,
        margin=args.margin,
        sufficiency_threshold=args.sufficiency_threshold,
        absence_threshold=args.absence_threshold,
        deficit_threshold=args.deficit_threshold,
    )
    y = parse_weights("--y", args.y) if args.y else None
    return run_planted_hubs(cfg, h=args.h, y_mode=args.mode, y=y, pool=pool)


def _conditional(args: argparse.Namespace, settings: SimulationSettings) -> RunRecord:
    pool = _require_pool(args.pool)
    cfg = _experiment_config(args, _params_from_args(args, pool), args.pool)
    return run_conditional(cfg, pool, draws=args.draws, s_points=args.s_points)


def _couple(args: argparse.Namespace, settings: SimulationSettings) -> RunRecord:
    pool = _load_pool(args.pool)
    cfg = _experiment_config(
        args, _params_from_args(args, pool), args.pool, eps=args.eps, R=args.R
    )
    return run_coupling_check(cfg, args.delta, args.R, pool)


def _run_oracle(args: argparse.Namespace, settings: SimulationSettings) -> JSONDict:
    params = _params_from_args(args)
    weights = parse_weights("--weights", args.weights)
    if len(weights) != args.n:
        raise ConfigError(f"--weights lists {len(weights)} weights but --n is {args.n}")
    n_model = args.n_model if args.n_model is not None else args.n
    law = exact_small_oracle(weights, params, n_model)
    return {
        "params": params.to_dict(),
        "weights": list(weights),
        "n_model": n_model,
        "largest_component_law": law,
    }


HANDLERS: dict[str, Callable[[argparse.Namespace, SimulationSettings], JSONDict]] = {
    "pool": _run_pool,
    "theta": _run_theta,
    "hubs": _run_hubs,
    "constant": _run_constant,
    "rate": _run_rate,
    "lln": _run_experiment(_lln),
    "plant": _run_experiment(_plant),
    "conditional": _run_experiment(_conditional),
    "couple": _run_experiment(_couple),
    "oracle": _run_oracle,
}


def _check_knobs(args: argparse.Namespace) -> None:
    for name in ("threads", "M", "cap", "weight_store_cap", "draws", "reps", "s_points"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be at least 1")


def dispatch(argv: Sequence[str]) -> int:
    try:
        settings = SimulationSettings.from_env()
        args = build_parser(settings).parse_args(list(argv))
        _check_knobs(args)
        settings = dataclasses.replace(settings, log_level=args.log_level)
        settings.configure_logging()
        payload = HANDLERS[args.command](args, settings)
        _emit(args, payload)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    except (DomainError, ConfigError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CouplingUnavailableError, EstimationError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
