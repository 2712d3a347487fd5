"""Command-line entry point: fitting, generation, simulation, sweeps, eval.

One binary with subcommands; runs are declared in a TOML or JSON config
file so they are reproducible, with ``--set key=value`` for one-off
overrides. All randomness flows from the single ``seed`` key (overridable
via the ``SLOSIM_SEED`` environment variable); component seeds are
hash-derived by name.

Exit codes: 0 success, 1 usage or config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any

from . import costmodel, predictor as predictor_mod, report, workload
from .core import SloCategory, SloCategoryTable, default_slo_table, relaxed_slo_table
from .predictor import (
    EQUAL_FREQUENCY,
    EQUAL_WIDTH,
    NOISY_BUCKET,
    ORACLE,
    Bucketing,
    LengthPredictor,
)
from .sched_baselines import EARLY_REJECT, GREEDY, SJF, BaselineConfig
from .sched_scorpio import R_PRIME, SCORPIO, ScorpioConfig
from .seeds import derive_seed
from .simengine import SimConfig, measure_overhead, run
from .workload import (
    EmpiricalDist,
    LogNormalDist,
    Trace,
    UniformDist,
    WorkloadSpec,
    generate,
    load_trace,
    save_trace,
)


class ConfigError(ValueError):
    """Config or usage problem; maps to exit code 1."""


# ---------------------------------------------------------------------------
# Config loading and validation.

_SCHEMA: dict[str, Any] = {
    "seed": None,
    "horizon_s": None,
    "trace": None,
    "workload": {
        "qps": None,
        "duration": None,
        "seed": None,
        "prompt_len_dist": {"type": None, "mu": None, "sigma": None, "low": None, "high": None, "file": None},
        "output_len_dist": {"type": None, "mu": None, "sigma": None, "low": None, "high": None, "file": None},
        "category_weights": None,
        "slo_table": None,
    },
    "policy": {
        "name": None,
        "max_batch_size": None,
        "prefill_priority": None,
        "ttft_guard": None,
        "tpot_guard": None,
        "admission_min": None,
    },
    "cost": {
        "file": None,
        "alpha": None,
        "beta": None,
        "gamma": None,
        "delta": None,
        "epsilon": None,
        "phi": None,
        "theta": None,
        "alpha_p": None,
        "beta_p": None,
    },
    "predictor": {
        "mode": None,
        "strategy": None,
        "num_buckets": None,
        "max_len": None,
        "error_prob": None,
        "error_spread": None,
    },
    "output": {"dir": None, "decision_log": None},
    "sweep": {"qps": None, "policies": None},
    "ablation": None,
}


def _check_keys(data: dict, schema: dict, path: str = "") -> None:
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key {where!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a table/object")
            _check_keys(value, sub, where)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        if path.suffix == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif path.suffix == ".json":
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, Exception) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")
    _check_keys(data, _SCHEMA)
    return data


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {key!r} crosses a non-table value")
        node[parts[-1]] = value
    _check_keys(config, _SCHEMA)
    return config


def resolve_seed(config: dict) -> int:
    env = os.environ.get("SLOSIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SLOSIM_SEED must be an integer, got {env!r}") from exc
    return int(config.get("seed", 0))


# ---------------------------------------------------------------------------
# Section builders.


def _build_slo_table(spec: Any) -> SloCategoryTable:
    if spec is None or spec == "default":
        return default_slo_table()
    if spec == "relaxed":
        return relaxed_slo_table()
    if isinstance(spec, list):
        try:
            rows = tuple(
                SloCategory(int(c), float(ttft_s), float(tpot_ms) / 1000.0)
                for c, ttft_s, tpot_ms in spec
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                "slo_table rows must be [category, ttft_s, tpot_ms] triples"
            ) from exc
        return SloCategoryTable(rows)
    raise ConfigError(f"bad slo_table {spec!r}")


def _build_dist(spec: Any, what: str) -> workload.LengthDist:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{what} must be a table with a 'type' key")
    kind = spec["type"]
    try:
        if kind == "lognormal":
            return LogNormalDist(mu=float(spec["mu"]), sigma=float(spec["sigma"]))
        if kind == "uniform":
            return UniformDist(low=int(spec["low"]), high=int(spec["high"]))
        if kind == "empirical":
            return EmpiricalDist.from_file(spec["file"])
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc
    raise ConfigError(f"unknown {what} type {kind!r}")


def build_workload_spec(config: dict, seed: int) -> WorkloadSpec:
    section = config.get("workload")
    if not section:
        raise ConfigError("config needs a [workload] section (or a trace path)")
    table = _build_slo_table(section.get("slo_table"))
    weights = section.get("category_weights")
    if weights is None:
        weights = [1.0] * len(table.rows)
    if len(weights) != len(table.rows):
        raise ConfigError("category_weights must match the SLO table row count")
    try:
        return WorkloadSpec(
            qps=float(section["qps"]),
            duration=float(section["duration"]),
            seed=int(section.get("seed", derive_seed(seed, "workload"))),
            prompt_len_dist=_build_dist(section.get("prompt_len_dist"), "prompt_len_dist"),
            output_len_dist=_build_dist(section.get("output_len_dist"), "output_len_dist"),
            category_weights=tuple(float(w) for w in weights),
            slo_table=table,
        )
    except KeyError as exc:
        raise ConfigError(f"workload section missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad workload section: {exc}") from exc


def build_trace(config: dict, seed: int) -> Trace:
    if config.get("trace"):
        if config.get("workload"):
            raise ConfigError("give either a trace path or a workload, not both")
        try:
            return load_trace(config["trace"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load trace: {exc}") from exc
    return generate(build_workload_spec(config, seed))


def build_cost_params(config: dict) -> tuple[costmodel.ItlParams, costmodel.PrefillParams]:
    section = config.get("cost")
    if not section:
        raise ConfigError("config needs a [cost] section")
    if "file" in section:
        extra = set(section) - {"file"}
        if extra:
            raise ConfigError("cost.file excludes inline coefficients")
        try:
            return costmodel.load_params_json(section["file"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load cost params: {exc}") from exc
    try:
        itl_params = costmodel.ItlParams(
            alpha=float(section["alpha"]) / 1000.0,
            beta=float(section["beta"]) / 1000.0,
            gamma=float(section["gamma"]) / 1000.0,
            delta=float(section["delta"]) / 1000.0,
            epsilon=float(section.get("epsilon", 1.1)),
        )
        prefill_params = costmodel.PrefillParams(
            phi=float(section["phi"]) / 1000.0,
            theta=float(section["theta"]),
            alpha_p=float(section["alpha_p"]) / 1000.0,
            beta_p=float(section["beta_p"]) / 1000.0,
        )
    except KeyError as exc:
        raise ConfigError(f"cost section missing {exc} (ms units)") from exc
    except ValueError as exc:
        raise ConfigError(f"bad cost section: {exc}") from exc
    return itl_params, prefill_params


def build_predictor(config: dict, seed: int, trace: Trace) -> LengthPredictor:
    section = config.get("predictor", {})
    mode = section.get("mode", ORACLE)
    strategy = section.get("strategy", EQUAL_WIDTH)
    num_buckets = int(section.get("num_buckets", 100))
    outputs = [r.true_output_len for r in trace] or [1]
    max_len = int(section.get("max_len", max(outputs)))
    try:
        if strategy == EQUAL_WIDTH:
            bucketing = Bucketing.equal_width(num_buckets, max(max_len, num_buckets))
        elif strategy == EQUAL_FREQUENCY:
            bucketing = Bucketing.equal_frequency(num_buckets, outputs)
        else:
            raise ConfigError(f"unknown bucketing strategy {strategy!r}")
        return LengthPredictor(
            mode=mode,
            bucketing=bucketing,
            error_prob=float(section.get("error_prob", 0.0)),
            error_spread=int(section.get("error_spread", 1)),
            rng_seed=derive_seed(seed, "predictor"),
        )
    except ValueError as exc:
        raise ConfigError(f"bad predictor section: {exc}") from exc


def build_sim_config(config: dict, seed: int, trace: Trace) -> SimConfig:
    itl_params, prefill_params = build_cost_params(config)
    policy_section = config.get("policy", {})
    name = policy_section.get("name", SCORPIO)
    if name not in (SCORPIO, GREEDY, SJF, EARLY_REJECT):
        raise ConfigError(f"unknown policy {name!r}")
    try:
        scorpio = ScorpioConfig(
            ttft_guard=bool(policy_section.get("ttft_guard", True)),
            tpot_guard=bool(policy_section.get("tpot_guard", True)),
            admission_min=policy_section.get("admission_min", R_PRIME),
        )
        baseline = BaselineConfig(
            policy=name if name != SCORPIO else GREEDY,
            max_batch_size=int(policy_section.get("max_batch_size", 256)),
            prefill_priority=bool(policy_section.get("prefill_priority", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad policy section: {exc}") from exc
    horizon = config.get("horizon_s")
    output = config.get("output", {})
    try:
        return SimConfig(
            policy=name,
            itl_params=itl_params,
            prefill_params=prefill_params,
            predictor=build_predictor(config, seed, trace),
            scorpio=scorpio,
            baseline=baseline,
            horizon=float(horizon) if horizon is not None else None,
            log_decisions=bool(output.get("decision_log", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        samples = costmodel.load_profile_csv(args.profile)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    itl_params, itl_report = costmodel.fit_itl(samples, epsilon=args.epsilon)
    if args.theta_sweep:
        candidates = [float(x) for x in args.theta_sweep.split(",")]
        theta, prefill_params, prefill_report = costmodel.sweep_theta(samples, candidates)
        print(f"theta sweep picked theta={theta:g}")
    else:
        prefill_params, prefill_report = costmodel.fit_prefill(samples, args.theta)
    costmodel.save_params_json(args.out, itl_params, prefill_params)
    print(
        f"decode fit: r2={itl_report.r2:.6f} rmse={itl_report.rmse * 1000:.4f}ms "
        f"mape={itl_report.mape:.3f}%"
    )
    print(
        f"prefill fit: r2={prefill_report.r2:.6f} rmse={prefill_report.rmse * 1000:.4f}ms "
        f"mape={prefill_report.mape:.3f}%"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), args.set or [])
    seed = resolve_seed(config)
    spec = build_workload_spec(config, seed)
    trace = generate(spec)
    save_trace(trace, args.out)
    mix: dict[int, int] = {}
    for r in trace:
        mix[r.category] = mix.get(r.category, 0) + 1
    print(f"generated {len(trace)} requests over {spec.duration:g}s at qps={spec.qps:g}")
    for cat in sorted(mix):
        print(f"  category {cat}: {mix[cat]}")
    print(f"wrote {args.out}")
    return 0


def _out_dir(args: argparse.Namespace, config: dict) -> Path:
    out = args.out_dir or config.get("output", {}).get("dir") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), args.set or [])
    seed = resolve_seed(config)
    trace = build_trace(config, seed)
    sim_config = build_sim_config(config, seed, trace)
    if args.log_decisions:
        sim_config = replace(sim_config, log_decisions=True)
    outcomes, log = run(trace, sim_config)
    out = _out_dir(args, config)
    horizon = report.report_horizon(sim_config.horizon, log)
    run_report = report.summarize(outcomes, horizon)
    overhead = measure_overhead(log)
    report.write_outcomes_csv(outcomes, out / "outcomes.csv")
    report.write_report_json(
        run_report, out / "report.json", extra={"policy": sim_config.policy}
    )
    # host wall-clock measurement: kept out of report.json so simulation
    # outputs stay byte-identical across reruns
    with open(out / "overhead.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "total_s": overhead.total_s,
                "schedule_s": overhead.schedule_s,
                "policy_s": overhead.policy_s,
                "overhead_pct": overhead.overhead_pct,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    report.write_cumulative_csv({sim_config.policy: run_report}, out / "fig5_cumulative.csv")
    if sim_config.log_decisions:
        log.to_jsonl(out / "decisions.jsonl")
    print(f"policy={sim_config.policy} requests={len(trace)}")
    print(f"goodput={run_report.goodput:.4f} req/s  adherence={run_report.adherence:.4f}")
    print(
        f"completed={run_report.status_counts.get('completed', 0)} "
        f"rejected_ttft={run_report.rejections['rejected_ttft']} "
        f"rejected_admission={run_report.rejections['rejected_admission']} "
        f"incomplete={run_report.status_counts.get('incomplete', 0)}"
    )
    print(f"wrote {out}/outcomes.csv, {out}/report.json")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), args.set or [])
    seed = resolve_seed(config)
    sweep_section = config.get("sweep")
    run_ablation = bool(config.get("ablation"))
    if not sweep_section and not run_ablation:
        raise ConfigError("compare needs a [sweep] section and/or ablation = true")
    if config.get("trace"):
        source: WorkloadSpec | Trace = build_trace(config, seed)
        probe = source
    else:
        source = build_workload_spec(config, seed)
        probe = generate(source)
    sim_config = build_sim_config(config, seed, probe)
    out = _out_dir(args, config)

    if sweep_section:
        qps_list = [float(q) for q in sweep_section.get("qps", [])]
        policies = list(sweep_section.get("policies", []))
        if not qps_list or not policies:
            raise ConfigError("sweep needs non-empty qps and policies lists")
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(report.sweep, source, [qps], [policy], sim_config, seed)
                    for qps in qps_list
                    for policy in policies
                ]
                cells: dict = {}
                for future in futures:
                    cells.update(future.result().cells)
            ratios = {
                (qps, a, b): cells[(qps, a)].report.goodput / cells[(qps, b)].report.goodput
                for qps in qps_list
                for a in policies
                for b in policies
                if a != b and cells[(qps, b)].report.goodput > 0
            }
            sweep_report = report.SweepReport(
                qps_values=tuple(qps_list),
                policies=tuple(policies),
                cells=cells,
                goodput_ratios=ratios,
            )
        else:
            sweep_report = report.sweep(source, qps_list, policies, sim_config, base_seed=seed)

        report.write_goodput_csv(sweep_report, out / "fig4_goodput.csv")
        with open(out / "sweep.json", "w", encoding="utf-8") as f:
            json.dump(sweep_report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        for qps in qps_list:
            runs = {
                policy: sweep_report.cells[(qps, policy)].report for policy in policies
            }
            report.write_cumulative_csv(
                runs, out / f"fig5_cumulative_qps{qps:g}.csv", qps=qps
            )
        print(f"{'qps':>8} {'policy':>14} {'goodput':>10} {'adherence':>10}")
        for (qps, policy), cell_result in sorted(sweep_report.cells.items()):
            print(
                f"{qps:>8g} {policy:>14} {cell_result.report.goodput:>10.4f} "
                f"{cell_result.report.adherence:>10.4f}"
            )
        print(f"wrote {out}/fig4_goodput.csv, {out}/sweep.json")

    if run_ablation:
        trace = probe if isinstance(source, WorkloadSpec) else source
        matrix = report.ablation(trace, sim_config)
        report.write_ablation_csv(matrix, out / "fig6_ablation.csv")
        print(f"{'config':>12} {'goodput':>10} {'adherence':>10} {'ttft_viol':>10} {'tpot_viol':>10}")
        for name in ("neither", "ttft_only", "tpot_only", "both"):
            rep = matrix[name]
            print(
                f"{name:>12} {rep.goodput:>10.4f} {rep.adherence:>10.4f} "
                f"{rep.ttft_violations:>10d} {rep.tpot_violations:>10d}"
            )
        print(f"wrote {out}/fig6_ablation.csv")
    return 0


def cmd_eval_predictor(args: argparse.Namespace) -> int:
    try:
        corpus = predictor_mod.load_corpus(args.corpus)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    outputs = [r.true_output_len for r in corpus] or [1]
    max_len = args.max_len or max(outputs)
    try:
        if args.strategy == EQUAL_WIDTH:
            bucketing = Bucketing.equal_width(args.num_buckets, max(max_len, args.num_buckets))
        else:
            bucketing = Bucketing.equal_frequency(args.num_buckets, outputs)
        pred = LengthPredictor(
            mode=args.mode,
            bucketing=bucketing,
            error_prob=args.error_prob,
            error_spread=args.error_spread,
            rng_seed=args.seed,
        )
        result = predictor_mod.evaluate(pred, corpus)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    payload = predictor_mod.eval_to_dict(result)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_convert_trace(args: argparse.Namespace) -> int:
    column_map: dict[str, str] = {}
    for pair in args.map.split(","):
        if "=" not in pair:
            raise ConfigError(f"--map expects key=column pairs, got {pair!r}")
        key, col = pair.split("=", 1)
        column_map[key.strip()] = col.strip()
    table = default_slo_table() if args.slo_table == "default" else relaxed_slo_table()
    weights = None
    if args.category_weights:
        weights = tuple(float(w) for w in args.category_weights.split(","))
    try:
        trace = workload.convert_csv(
            args.csv,
            column_map,
            slo_table=table,
            category=args.category if weights is None else None,
            category_weights=weights,
            seed=args.seed,
        )
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    save_trace(trace, args.out)
    print(f"converted {len(trace)} requests -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring.


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slosim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit cost-model parameters from a profile CSV")
    p.add_argument("--profile", required=True, help="CSV: kind,batch_size,avg_seq_len,prompt_len,latency_ms")
    p.add_argument("--out", required=True, help="output params JSON path")
    p.add_argument("--theta", type=float, default=128.0, help="prefill knee in tokens")
    p.add_argument("--theta-sweep", default="", help="comma list of candidate thetas")
    p.add_argument("--epsilon", type=float, default=1.1, help="inefficiency cushion (>=1)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gen", help="generate a synthetic trace from a workload config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True, help="output trace JSONL path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="run one simulation from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out-dir", default="")
    p.add_argument("--log-decisions", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run a QPS x policy sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out-dir", default="")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval-predictor", help="score a length predictor on a corpus")
    p.add_argument("--corpus", required=True, help="JSONL with prompt_len/output_len rows")
    p.add_argument("--mode", choices=[ORACLE, NOISY_BUCKET], default=ORACLE)
    p.add_argument("--strategy", choices=[EQUAL_WIDTH, EQUAL_FREQUENCY], default=EQUAL_WIDTH)
    p.add_argument("--num-buckets", type=int, default=100)
    p.add_argument("--max-len", type=int, default=0)
    p.add_argument("--error-prob", type=float, default=0.0)
    p.add_argument("--error-spread", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_eval_predictor)

    p = sub.add_parser("convert-trace", help="convert a generic CSV trace to JSONL")
    p.add_argument("--csv", required=True)
    p.add_argument("--map", required=True, help="timestamp=<col>,prompt=<col>,output=<col>")
    p.add_argument("--out", required=True)
    p.add_argument("--slo-table", choices=["default", "relaxed"], default="default")
    p.add_argument("--category", type=int, default=1)
    p.add_argument("--category-weights", default="", help="comma list; samples categories")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
