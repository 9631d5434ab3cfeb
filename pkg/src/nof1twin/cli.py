"""Command-line front end: simulate, analyze, replicate, oracle.

Configuration precedence is defaults < params file (`key=value` lines,
'#' comments) < `--set key=value` < dedicated flags.  Every output embeds
the fully-resolved configuration so a run can be reproduced from its
artifacts alone.  Exit codes: 0 success, 2 config error, 3 data error,
4 estimator error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .arco import ArcoParams, PropensityParams, SimConfig, simulate_dataset
from .core import (
    LAG_CONTINUOUS,
    LAG_NONE,
    LAG_QUARTILE,
    FeatureSpec,
    SeedSpec,
    TimeSeriesDataset,
    dichotomize_exposure,
    load_table,
    log10_transform,
)
from .errors import ConfigError, DataError, EstimatorError, Nof1TwinError
from .harness import (
    REPLICATION_FOREST_TREES,
    Method,
    MethodOptions,
    StudyConfig,
    apply_method,
    default_study_params,
    replicate,
)
from .models import ForestConfig
from .motr import ApteEstimate, MotrConfig
from .oracle import MODE_IID, MODE_PERMUTATION, EnumSpec, enumerate_apte
from .pstn import PstnConfig, PstnResult

DEFAULT_SEED = 1

_PARAM_KEYS = {
    "beta0": float,
    "betaX": float,
    "betaCo": float,
    "betaXco": float,
    "betaAr": float,
    "betaXar": float,
    "sigmaEps": float,
    "alpha0": float,
    "alphaEn": float,
    "alphaAr": float,
    "pi1": float,
    "m": int,
    "burnin": int,
    "seed": int,
    "randomized": bool,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_params_config(path: str | None, overrides: list[str]) -> dict:
    """Resolve the simulation-parameter configuration, defaults upward."""
    arco, prop = default_study_params()
    resolved: dict = {
        "beta0": arco.beta0,
        "betaX": arco.beta_x,
        "betaCo": arco.beta_co,
        "betaXco": arco.beta_xco,
        "betaAr": arco.beta_ar,
        "betaXar": arco.beta_xar,
        "sigmaEps": arco.sigma_eps,
        "alpha0": prop.alpha0,
        "alphaEn": prop.alpha_en,
        "alphaAr": prop.alpha_ar,
        "pi1": prop.pi1,
        "m": 220,
        "burnin": 2,
        "seed": DEFAULT_SEED,
        "randomized": False,
    }

    def apply(key: str, raw: str, origin: str) -> None:
        if key not in _PARAM_KEYS:
            raise ConfigError(f"{origin}: unknown configuration key {key!r}")
        kind = _PARAM_KEYS[key]
        try:
            resolved[key] = _parse_bool(raw) if kind is bool else kind(raw)
        except ValueError:
            raise ConfigError(f"{origin}: key {key!r} expects {kind.__name__}, got {raw!r}") from None

    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read params file {path}: {exc}") from None
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, value = _parse_kv(line)
            apply(key, value, f"{path}:{lineno}")
    for item in overrides:
        key, value = _parse_kv(item)
        apply(key, value, "--set")
    return resolved


def _params_from_config(cfg: dict) -> tuple[ArcoParams, PropensityParams]:
    arco = ArcoParams(
        beta0=cfg["beta0"],
        beta_x=cfg["betaX"],
        beta_co=cfg["betaCo"],
        beta_xco=cfg["betaXco"],
        beta_ar=cfg["betaAr"],
        beta_xar=cfg["betaXar"],
        sigma_eps=cfg["sigmaEps"],
    )
    prop = PropensityParams(
        alpha0=cfg["alpha0"],
        alpha_en=cfg["alphaEn"],
        alpha_ar=cfg["alphaAr"],
        pi1=cfg["pi1"],
    )
    return arco, prop


def _echo_lines(cfg: dict) -> list[str]:
    return [f"{key}={cfg[key]}" for key in sorted(cfg)]


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_params_config(args.params, args.set or [])
    if args.m is not None:
        cfg["m"] = args.m
    if args.burnin is not None:
        cfg["burnin"] = args.burnin
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.randomized:
        cfg["randomized"] = True
    arco, prop = _params_from_config(cfg)
    sim = SimConfig(
        m_analysis=cfg["m"],
        burn_in=cfg["burnin"],
        seed=SeedSpec(cfg["seed"]),
        randomized_mode=cfg["randomized"],
    )
    ds = simulate_dataset(arco, prop, sim)
    try:
        ds.to_csv(args.output, header_comments=_echo_lines(cfg))
    except OSError as exc:
        raise DataError(f"cannot write {args.output}: {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _load_analysis_dataset(args: argparse.Namespace) -> TimeSeriesDataset:
    t, y, x, exog = load_table(args.data)
    if not np.array_equal(t, np.arange(1, len(y) + 1)):
        raise DataError(f"{args.data}: period column t must be contiguous integers starting at 1")
    if args.log10_y:
        y = log10_transform(y)
    if args.dichotomize_x:
        x, _ = dichotomize_exposure(x)
    elif not np.all(np.isin(x, (0, 1))):
        raise DataError(
            f"{args.data}: exposure column is not binary; pass --dichotomize-x to median-split it"
        )
    return TimeSeriesDataset(y=y, x=x.astype(np.int64), exog=exog or None)


def _feature_specs(args: argparse.Namespace) -> tuple[FeatureSpec, FeatureSpec]:
    exog = tuple(n for n in (args.exog or "").split(",") if n)
    lag = {"continuous": LAG_CONTINUOUS, "quartile": LAG_QUARTILE, "none": LAG_NONE}[args.lag_y]
    outcome = FeatureSpec(
        include_current_exposure=True,
        outcome_lag_mode=lag,
        use_exposure_lag1=args.lag_x,
        exog_names=exog,
    )
    propensity = FeatureSpec(
        include_current_exposure=False,
        outcome_lag_mode=lag,
        use_exposure_lag1=args.lag_x,
        exog_names=exog,
    )
    return outcome, propensity


def _analyze_config_echo(args: argparse.Namespace, method: Method) -> dict:
    return {
        "data": args.data,
        "method": method.value.replace("_", "-"),
        "seed": args.seed,
        "lag_y": args.lag_y,
        "lag_x": args.lag_x,
        "exog": args.exog or "",
        "log10_y": args.log10_y,
        "dichotomize_x": args.dichotomize_x,
        "r_min": args.r_min,
        "r_max": args.r_max,
        "stop_tol": args.stop_tol,
        "stop_window": args.stop_window,
        "trim_lo": args.trim[0],
        "trim_hi": args.trim[1],
        "use_overlap": not args.no_overlap,
        "use_stabilized": not args.no_stabilize,
        "n_trees": args.n_trees,
        "mtry": args.mtry,
        "min_node_size": args.min_node_size,
    }


def _result_payload(res) -> dict:
    if isinstance(res.detail, ApteEstimate):
        est = res.detail
        return {
            "delta": est.delta,
            "ci": [est.ci[0], est.ci[1]],
            "runs_used": est.runs_used,
            "trajectory": [[d, lo, hi] for d, lo, hi in est.trajectory],
            "mean_po_1": est.mean_po_1,
            "mean_po_0": est.mean_po_0,
            "degenerate_ci": est.degenerate_ci,
        }
    if isinstance(res.detail, PstnResult):
        pr = res.detail
        return {
            "delta": pr.delta,
            "mean_po_1": pr.mean_po_1,
            "mean_po_0": pr.mean_po_0,
            "retained_count": len(pr.retained),
            "excluded": dict(pr.excluded),
        }
    payload = {"delta": res.estimate}
    if res.ci is not None:
        payload["ci"] = [res.ci[0], res.ci[1]]
    return payload


def cmd_analyze(args: argparse.Namespace) -> int:
    method = Method.parse(args.method)
    ds = _load_analysis_dataset(args)
    outcome_spec, propensity_spec = _feature_specs(args)
    opts = MethodOptions(
        outcome_spec=outcome_spec,
        propensity_spec=propensity_spec,
        motr=MotrConfig(
            r_min=args.r_min,
            r_max=args.r_max,
            stop_tol=args.stop_tol,
            stop_window=args.stop_window,
        ),
        pstn=PstnConfig(
            trim_bounds=(args.trim[0], args.trim[1]),
            use_overlap=not args.no_overlap,
            use_stabilized=not args.no_stabilize,
        ),
        forest=ForestConfig(
            n_trees=args.n_trees, mtry=args.mtry, min_node_size=args.min_node_size
        ),
    )
    res = apply_method(ds, method, opts, SeedSpec(args.seed))
    payload = {
        "config": _analyze_config_echo(args, method),
        "method": method.value.replace("_", "-"),
        "result": _result_payload(res),
    }
    _write_json(payload, args.output)

    if args.dump_model:
        if res.model_summary is None:
            raise ConfigError(f"method {method.value!r} fits no model to dump")
        _write_json(res.model_summary, args.dump_model)
    if args.runs_csv:
        if not isinstance(res.detail, ApteEstimate):
            raise ConfigError("--runs-csv applies to motr-glm / motr-rf only")
        _write_runs_csv(args.runs_csv, res.detail)
    if args.periods_csv:
        if not isinstance(res.detail, PstnResult):
            raise ConfigError("--periods-csv applies to pstn-glm / pstn-rf only")
        _write_periods_csv(args.periods_csv, res.detail)
    return 0


def _write_runs_csv(path: str, est: ApteEstimate) -> None:
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["r", "delta_r", "lo_r", "hi_r", "cum_delta", "cum_lo", "cum_hi"])
        # Recover per-run values from consecutive cumulative means.
        prev = (0.0, 0.0, 0.0)
        for r, (cd, cl, ch) in enumerate(est.trajectory, start=1):
            d_r = cd * r - prev[0] * (r - 1)
            l_r = cl * r - prev[1] * (r - 1)
            h_r = ch * r - prev[2] * (r - 1)
            writer.writerow([r, repr(d_r), repr(l_r), repr(h_r), repr(cd), repr(cl), repr(ch)])
            prev = (cd, cl, ch)


def _write_periods_csv(path: str, res: PstnResult) -> None:
    import csv as _csv

    weight_by_t = dict(zip(res.retained, res.weights))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["t", "pi_hat", "weight", "retained"])
        for t, pi in zip(res.t_index, res.pi_hat):
            kept = t in weight_by_t
            writer.writerow([t, repr(pi), repr(weight_by_t[t]) if kept else "", int(kept)])


# ---------------------------------------------------------------------------
# replicate
# ---------------------------------------------------------------------------

def cmd_replicate(args: argparse.Namespace) -> int:
    cfg = load_params_config(args.params, args.set or [])
    if args.m is not None:
        cfg["m"] = args.m
    if args.seed is not None:
        cfg["seed"] = args.seed
    arco, prop = _params_from_config(cfg)
    methods = tuple(Method.parse(name) for name in args.methods.split(","))
    study = StudyConfig(
        h_datasets=args.h_datasets,
        m_analysis=cfg["m"],
        params=arco,
        propensity=prop,
        methods=methods,
        burn_in=cfg["burnin"],
        seed=SeedSpec(cfg["seed"]),
        options=MethodOptions(
            motr=MotrConfig(
                r_min=args.r_min,
                r_max=args.r_max,
                stop_tol=args.stop_tol,
                stop_window=args.stop_window,
            ),
            pstn=PstnConfig(
                trim_bounds=(args.trim[0], args.trim[1]),
                use_overlap=not args.no_overlap,
                use_stabilized=not args.no_stabilize,
            ),
            forest=ForestConfig(
                n_trees=args.n_trees, mtry=args.mtry, min_node_size=args.min_node_size
            ),
        ),
        workers=args.workers,
    )
    report = replicate(study)
    lines = _echo_lines(
        {
            **cfg,
            "h_datasets": args.h_datasets,
            "methods": args.methods,
            "workers": args.workers,
            "r_min": args.r_min,
            "r_max": args.r_max,
            "stop_tol": args.stop_tol,
            "stop_window": args.stop_window,
            "trim_lo": args.trim[0],
            "trim_hi": args.trim[1],
            "use_overlap": not args.no_overlap,
            "use_stabilized": not args.no_stabilize,
            "n_trees": args.n_trees,
        }
    )
    try:
        report.write_rows_csv(f"{args.out_prefix}_rows.csv", lines)
        report.write_summary_csv(f"{args.out_prefix}_summary.csv", lines)
    except OSError as exc:
        raise DataError(f"cannot write outputs with prefix {args.out_prefix}: {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def cmd_oracle(args: argparse.Namespace) -> int:
    cfg = load_params_config(args.params, args.set or [])
    if args.m is not None:
        cfg["m"] = args.m
    cfg["sigmaEps"] = 0.0
    arco, _ = _params_from_config(cfg)
    mode = MODE_PERMUTATION if args.mode == "permutation" else MODE_IID
    spec = EnumSpec(
        m=cfg["m"],
        mode=mode,
        params=arco,
        m1=args.m1,
        pi=args.pi,
        y_init=args.y_init,
    )
    value = enumerate_apte(spec)
    payload = {
        "config": {
            **{k: cfg[k] for k in sorted(cfg)},
            "mode": args.mode,
            "m1": args.m1,
            "pi": args.pi,
            "y_init": args.y_init,
        },
        "mode": args.mode,
        "m": cfg["m"],
        "apte_exact": value,
    }
    _write_json(payload, args.output)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nof1twin",
        description="Within-individual treatment effect estimation for n-of-1 time series",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_params(p: argparse.ArgumentParser) -> None:
        p.add_argument("--params", help="key=value parameter file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key")

    def add_motr(p: argparse.ArgumentParser) -> None:
        p.add_argument("--r-min", type=int, default=10)
        p.add_argument("--r-max", type=int, default=200)
        p.add_argument("--stop-tol", type=float, default=1e-3)
        p.add_argument("--stop-window", type=int, default=5)

    def add_pstn(p: argparse.ArgumentParser) -> None:
        p.add_argument("--trim", type=float, nargs=2, default=[0.05, 0.95], metavar=("LO", "HI"))
        p.add_argument("--no-overlap", action="store_true")
        p.add_argument("--no-stabilize", action="store_true")

    def add_forest(p: argparse.ArgumentParser, default_trees: int) -> None:
        p.add_argument("--n-trees", type=int, default=default_trees)
        p.add_argument("--mtry", type=int, default=None)
        p.add_argument("--min-node-size", type=int, default=None)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    add_params(sim)
    sim.add_argument("--m", type=int, help="analyzed length after burn-in (default 220)")
    sim.add_argument("--burnin", type=int, help="leading periods to discard (default 2)")
    sim.add_argument("--seed", type=int, help=f"base seed (default {DEFAULT_SEED})")
    sim.add_argument("--randomized", action="store_true", help="i.i.d. Bernoulli(pi1) exposure")
    sim.add_argument("-o", "--output", required=True, help="output CSV path")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="estimate the effect on a dataset CSV")
    ana.add_argument("--data", required=True, help="input dataset CSV")
    ana.add_argument(
        "--method",
        required=True,
        choices=["raw", "coef", "motr-glm", "motr-rf", "pstn-glm", "pstn-rf"],
    )
    ana.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ana.add_argument("--lag-y", choices=["continuous", "quartile", "none"], default="continuous")
    ana.add_argument("--lag-x", action="store_true", help="include the lagged exposure feature")
    ana.add_argument("--exog", help="comma-separated exogenous column names")
    ana.add_argument("--log10-y", action="store_true", help="analyze log10 of the outcome")
    ana.add_argument("--dichotomize-x", action="store_true", help="median-split a continuous exposure")
    add_motr(ana)
    add_pstn(ana)
    add_forest(ana, default_trees=500)
    ana.add_argument("--dump-model", metavar="PATH", help="write fitted-model summary JSON")
    ana.add_argument("--runs-csv", metavar="PATH", help="write per-run CSV (motr methods)")
    ana.add_argument("--periods-csv", metavar="PATH", help="write per-period CSV (pstn methods)")
    ana.add_argument("-o", "--output", help="output JSON path (default stdout)")
    ana.set_defaults(func=cmd_analyze)

    rep = sub.add_parser("replicate", help="run the multi-dataset bias study")
    add_params(rep)
    rep.add_argument("--h-datasets", type=int, default=100, metavar="H")
    rep.add_argument("--m", type=int, help="analyzed length (default 220)")
    rep.add_argument("--seed", type=int, help=f"base seed (default {DEFAULT_SEED})")
    rep.add_argument(
        "--methods",
        default="raw,coef,motr-glm,pstn-glm,motr-rf,pstn-rf",
        help="comma-separated method list",
    )
    rep.add_argument("--workers", type=int, default=1)
    add_motr(rep)
    add_pstn(rep)
    add_forest(rep, default_trees=REPLICATION_FOREST_TREES)
    rep.add_argument("-o", "--out-prefix", required=True, help="prefix for _rows.csv/_summary.csv")
    rep.set_defaults(func=cmd_replicate)

    orc = sub.add_parser("oracle", help="exact enumeration for small noise-free systems")
    add_params(orc)
    orc.add_argument(
        "--m", type=int, help="periods to enumerate (<= 12 permutation mode, <= 20 iid mode)"
    )
    orc.add_argument("--mode", choices=["permutation", "iid"], default="permutation")
    orc.add_argument("--m1", type=int, help="number of exposed periods (permutation mode)")
    orc.add_argument("--pi", type=float, help="exposure probability (iid mode)")
    orc.add_argument("--y-init", type=float, default=None, help="initial outcome level")
    orc.add_argument("-o", "--output", help="output JSON path (default stdout)")
    orc.set_defaults(func=cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except EstimatorError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return 4
    except Nof1TwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
