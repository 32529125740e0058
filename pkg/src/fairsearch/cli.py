"""Command-line entry point: run scenarios, analyze result sets, plot fronts.

``run`` executes one method on one scenario for N seeded repetitions and
writes ``run_<i>.json`` files plus ``summary.csv``; ``analyze`` compares
two or more result directories (statistics, hypervolume, Pareto counts);
``plot`` renders a fairness-vs-effectiveness scatter with the front
overlaid as SVG. Seeds derive from (base seed, run index), so methods run
with the same base seed share splits run-by-run. All outputs are
timestamp-free and written atomically; repeated invocations are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .analysis import (
    ObjectivePoint,
    RunResult,
    RunSolution,
    aggregate_runs,
    check_alignment,
    hypervolume2d,
    is_fairness_metric,
    pareto_front,
    pareto_optimality_counts,
    reference_point,
    to_min_space,
)
from .dataset import DatasetSchema, Table, load_csv, split
from .errors import ConfigError, FairsearchError
from .metrics import EFFECTIVENESS_KEYS, INTERSECTIONAL_KEYS, MetricsRecord
from .rng import derive_seed
from .search import (
    SearchConfig,
    default_forest_baseline,
    finalize_front,
    grid_search_baseline,
    nsga2_run,
    random_search,
)

METHODS = ("fairrf", "random-search", "grid-rf", "default-rf")
SEED_ENV_VAR = "FAIRSEARCH_SEED"


@dataclass
class ScenarioConfig:
    """One dataset + schema + method + repetition setup."""

    data: str
    schema: DatasetSchema
    method: str = "fairrf"
    runs: int = 20
    seed: int = 0
    out: str = "results"
    jobs: int = 1
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")


def metric_key_order(sensitive_names, intersectional: bool) -> list[str]:
    keys = list(EFFECTIVENESS_KEYS)
    for family in ("spd", "eod", "aod"):
        keys.extend(f"{family}.{name}" for name in sensitive_names)
    if intersectional:
        keys.extend(INTERSECTIONAL_KEYS)
    return keys


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fitness_dict(fitness) -> dict:
    return {"accuracy": fitness.accuracy, "abs_spd": fitness.abs_spd}


def execute_run(table: Table, scenario: ScenarioConfig, run_index: int) -> dict:
    """One seeded end-to-end run; returns the JSON-ready payload."""
    seed_i = derive_seed(scenario.seed, run_index)
    splits = split(table, seed_i)
    telemetry: dict = {}
    if scenario.method == "fairrf":
        cfg = SearchConfig(
            population_size=scenario.search.population_size,
            generations=scenario.search.generations,
            crossover_prob=scenario.search.crossover_prob,
            mutation_prob=scenario.search.mutation_prob,
            inner_mutation_prob=scenario.search.inner_mutation_prob,
            parents_per_generation=scenario.search.parents_per_generation,
            seed=seed_i,
        )
        front = nsga2_run(table, splits, cfg, telemetry=telemetry)
        finalized = finalize_front(front, table, splits, seed_i)
        solutions = [
            {
                "config": ind.genome.to_dict(),
                "validation_fitness": _fitness_dict(ind.fitness),
                "test_metrics": record.to_flat_dict(),
            }
            for ind, (_, record) in zip(front, finalized)
        ]
        evaluations = telemetry["total_evaluations"]
    elif scenario.method == "random-search":
        front = random_search(table, splits, seed=seed_i, telemetry=telemetry)
        finalized = finalize_front(front, table, splits, seed_i)
        solutions = [
            {
                "config": ind.genome.to_dict(),
                "validation_fitness": _fitness_dict(ind.fitness),
                "test_metrics": record.to_flat_dict(),
            }
            for ind, (_, record) in zip(front, finalized)
        ]
        evaluations = telemetry["total_evaluations"]
    elif scenario.method == "grid-rf":
        hp, record = grid_search_baseline(table, splits, seed=seed_i)
        solutions = [
            {
                "config": {"mutation_value": None, **_hp_dict(hp)},
                "validation_fitness": None,
                "test_metrics": record.to_flat_dict(),
            }
        ]
        evaluations = None
    else:  # default-rf
        hp, record = default_forest_baseline(table, splits, seed_i)
        solutions = [
            {
                "config": {"mutation_value": None, **_hp_dict(hp)},
                "validation_fitness": None,
                "test_metrics": record.to_flat_dict(),
            }
        ]
        evaluations = None

    runs = [
        RunSolution(config=s["config"], test_metrics=MetricsRecord.from_flat_dict(s["test_metrics"]))
        for s in solutions
    ]
    result = RunResult(scenario.method, run_index, seed_i, runs)
    payload = {
        "method": scenario.method,
        "run_index": run_index,
        "seed": seed_i,
        "scenario": {
            "data": scenario.data,
            "label": scenario.schema.label,
            "positive": scenario.schema.positive,
            "sensitive": scenario.schema.sensitive,
        },
        "solutions": solutions,
        "front_average": result.front_average,
    }
    if scenario.method in ("fairrf", "random-search"):
        payload["search_config"] = {
            "population_size": scenario.search.population_size,
            "generations": scenario.search.generations,
            "crossover_prob": scenario.search.crossover_prob,
            "mutation_prob": scenario.search.mutation_prob,
            "inner_mutation_prob": scenario.search.inner_mutation_prob,
            "parents_per_generation": scenario.search.parents_per_generation,
        }
        payload["evaluations"] = evaluations
    return payload


def _hp_dict(hp) -> dict:
    return {
        "n_estimators": hp.n_estimators,
        "criterion": hp.criterion,
        "max_depth": hp.max_depth,
        "min_samples_split": hp.min_samples_split,
        "max_features": hp.max_features,
    }


_RUN_CTX: tuple[Table, ScenarioConfig] | None = None


def _init_run_worker(table, scenario):
    global _RUN_CTX
    _RUN_CTX = (table, scenario)


def _worker_run(run_index: int) -> tuple[int, dict]:
    table, scenario = _RUN_CTX
    return run_index, execute_run(table, scenario, run_index)


def cmd_run(scenario: ScenarioConfig) -> list[str]:
    """Execute every run of the scenario and write run files + summary."""
    table = load_csv(scenario.data, scenario.schema)
    os.makedirs(scenario.out, exist_ok=True)
    indices = list(range(scenario.runs))
    if scenario.jobs > 1:
        with ProcessPoolExecutor(
            max_workers=scenario.jobs,
            initializer=_init_run_worker,
            initargs=(table, scenario),
        ) as pool:
            payloads = dict(pool.map(_worker_run, indices))
    else:
        payloads = {i: execute_run(table, scenario, i) for i in indices}

    written = []
    for i in indices:
        path = os.path.join(scenario.out, f"run_{i}.json")
        _write_atomic(path, json.dumps(payloads[i], sort_keys=True, indent=2) + "\n")
        written.append(path)

    keys = metric_key_order(scenario.schema.sensitive, len(scenario.schema.sensitive) >= 2)
    keys = [k for k in keys if any(k in payloads[i]["front_average"] for i in indices)]
    lines = [",".join(["run_index", "seed", "n_solutions"] + keys)]
    for i in indices:
        p = payloads[i]
        row = [str(i), str(p["seed"]), str(len(p["solutions"]))]
        row += [_csv_num(p["front_average"].get(k)) for k in keys]
        lines.append(",".join(row))
    summary = os.path.join(scenario.out, "summary.csv")
    _write_atomic(summary, "\n".join(lines) + "\n")
    written.append(summary)
    return written


def _csv_num(value) -> str:
    return "" if value is None else repr(float(value))


def load_run_dir(path: str) -> list[RunResult]:
    """Read a results directory back into RunResults ordered by run index."""
    files = sorted(
        (f for f in os.listdir(path) if f.startswith("run_") and f.endswith(".json")),
        key=lambda f: int(f[4:-5]),
    )
    if not files:
        raise FairsearchError(f"{path}: no run_<i>.json files found")
    results = []
    for name in files:
        with open(os.path.join(path, name), encoding="utf-8") as fh:
            payload = json.load(fh)
        solutions = [
            RunSolution(
                config=s["config"],
                test_metrics=MetricsRecord.from_flat_dict(s["test_metrics"]),
                validation_fitness=s.get("validation_fitness"),
            )
            for s in payload["solutions"]
        ]
        results.append(
            RunResult(payload["method"], payload["run_index"], payload["seed"], solutions)
        )
    return results


def _solution_points(runs: list[RunResult], eff_key: str, fair_key: str):
    """Per-run minimization-space points of every solution with both
    metrics defined."""
    per_run = []
    for r in runs:
        pts = []
        for sol in r.solutions:
            flat = sol.test_metrics.to_flat_dict()
            eff, fair = flat.get(eff_key), flat.get(fair_key)
            if eff is not None and fair is not None:
                pts.append(to_min_space(eff, fair))
        per_run.append(pts)
    return per_run


def _available_pairs(results_by_method) -> list[tuple[str, str]]:
    keys = set()
    for runs in results_by_method.values():
        for r in runs:
            keys.update(r.front_average)
    eff = [k for k in EFFECTIVENESS_KEYS if k in keys]
    fair = [k for k in sorted(keys) if is_fairness_metric(k)]
    return [(e, f) for e in eff for f in fair]


def cmd_analyze(dirs: list[str], out: str, pairs: list[tuple[str, str]] | None = None) -> list[str]:
    """Compare >= 2 result directories; the first is the target method."""
    if len(dirs) < 2:
        raise ConfigError("analyze needs at least two result directories")
    results_by_method: dict[str, list[RunResult]] = {}
    for d in dirs:
        runs = load_run_dir(d)
        method = runs[0].method
        if method in results_by_method:
            raise ConfigError(f"duplicate method {method!r} across directories")
        results_by_method[method] = runs
    check_alignment(results_by_method)
    target = next(iter(results_by_method))

    summary, reports = aggregate_runs(results_by_method, target)
    os.makedirs(out, exist_ok=True)
    written = []

    metric_keys = sorted({k for m in summary.values() for k in m})
    lines = [",".join(["method"] + metric_keys)]
    for method, per_metric in summary.items():
        cells = [method]
        for k in metric_keys:
            if k in per_metric:
                mean, std = per_metric[k]
                cells.append(f"{mean:.3f}±{std:.3f}")
            else:
                cells.append("")
        lines.append(",".join(cells))
    path = os.path.join(out, "summary_table.csv")
    _write_atomic(path, "\n".join(lines) + "\n")
    written.append(path)

    report_payload = {
        "metadata": {"wilcoxon": "one-sided", "alpha": 0.05, "target": target},
        "reports": {
            baseline: {
                metric: {
                    "p_value": r.p_value,
                    "a12": r.a12,
                    "effect_label": r.effect_label,
                    "direction": r.direction,
                }
                for metric, r in per_metric.items()
            }
            for baseline, per_metric in reports.items()
        },
    }
    path = os.path.join(out, "stat_reports.json")
    _write_atomic(path, json.dumps(report_payload, sort_keys=True, indent=2) + "\n")
    written.append(path)
    lines = ["baseline,metric,p_value,a12,effect_label,direction"]
    for baseline, per_metric in reports.items():
        for metric, r in per_metric.items():
            lines.append(
                f"{baseline},{metric},{r.p_value!r},{r.a12!r},{r.effect_label},{r.direction}"
            )
    path = os.path.join(out, "stat_reports.csv")
    _write_atomic(path, "\n".join(lines) + "\n")
    written.append(path)

    if pairs is None:
        pairs = _available_pairs(results_by_method)
    hv_payload: dict = {}
    count_payload: dict = {}
    for eff_key, fair_key in pairs:
        pair_name = f"{eff_key}:{fair_key}"
        per_method_points = {
            m: _solution_points(runs, eff_key, fair_key)
            for m, runs in results_by_method.items()
        }
        all_fronts = []
        for per_run in per_method_points.values():
            for pts in per_run:
                if pts:
                    all_fronts.append(
                        pareto_front([ObjectivePoint(p) for p in pts])
                    )
        if not all_fronts:
            continue
        ref = reference_point(all_fronts)
        hv_payload[pair_name] = {
            m: [
                hypervolume2d(pareto_front([ObjectivePoint(p) for p in pts]), ref)
                if pts
                else 0.0
                for pts in per_run
            ]
            for m, per_run in per_method_points.items()
        }
        count_payload[pair_name] = pareto_optimality_counts(
            {m: [p for pts in per_run for p in pts] for m, per_run in per_method_points.items()}
        )

    path = os.path.join(out, "hypervolume.json")
    _write_atomic(path, json.dumps(hv_payload, sort_keys=True, indent=2) + "\n")
    written.append(path)
    methods = list(results_by_method)
    lines = [",".join(["pair", "method", "run_index", "hypervolume"])]
    for pair_name in sorted(hv_payload):
        for m in methods:
            for i, hv in enumerate(hv_payload[pair_name][m]):
                lines.append(f"{pair_name},{m},{i},{hv!r}")
    path = os.path.join(out, "hypervolume.csv")
    _write_atomic(path, "\n".join(lines) + "\n")
    written.append(path)

    path = os.path.join(out, "pareto_counts.json")
    _write_atomic(path, json.dumps(count_payload, sort_keys=True, indent=2) + "\n")
    written.append(path)
    lines = [",".join(["pair"] + methods)]
    for pair_name in sorted(count_payload):
        lines.append(
            ",".join([pair_name] + [str(count_payload[pair_name][m]) for m in methods])
        )
    path = os.path.join(out, "pareto_counts.csv")
    _write_atomic(path, "\n".join(lines) + "\n")
    written.append(path)
    return written


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def scatter_svg(points, front, x_label: str, y_label: str) -> str:
    """Static SVG scatter; x is the fairness score (lower is better), y the
    effectiveness score (higher is better), front polyline overlaid."""
    width, height, margin = 640, 480, 60
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.08 or 0.05
    y_pad = (y_hi - y_lo) * 0.08 or 0.05
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def px(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for k in range(5):
        xv = x_lo + (x_hi - x_lo) * k / 4
        yv = y_lo + (y_hi - y_lo) * k / 4
        parts.append(
            f'<text x="{px(xv):.1f}" y="{height - margin + 18:.1f}" font-size="11" '
            f'text-anchor="middle">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8:.1f}" y="{py(yv) + 4:.1f}" font-size="11" '
            f'text-anchor="end">{yv:.3g}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 15:.1f}" font-size="14" '
        f'text-anchor="middle">{_svg_escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="18" y="{height / 2:.1f}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 18 {height / 2:.1f})">{_svg_escape(y_label)}</text>'
    )
    if len(front) >= 2:
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(front))
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>'
        )
    for x, y in points:
        parts.append(
            f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3.5" fill="#1f77b4" '
            f'fill-opacity="0.65"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(results_dir: str, out: str, fairness_key: str, effectiveness_key: str) -> str:
    """Scatter of every solution in a results directory plus its front."""
    runs = load_run_dir(results_dir)
    points = []
    for r in runs:
        for sol in r.solutions:
            flat = sol.test_metrics.to_flat_dict()
            if fairness_key not in flat or effectiveness_key not in flat:
                available = sorted(flat)
                missing = fairness_key if fairness_key not in flat else effectiveness_key
                raise ConfigError(
                    f"unknown metric {missing!r}; available metrics: {', '.join(available)}"
                )
            if flat[fairness_key] is None or flat[effectiveness_key] is None:
                continue
            points.append((flat[fairness_key], flat[effectiveness_key]))
    if not points:
        raise FairsearchError(f"{results_dir}: no plottable solutions")
    min_pts = [ObjectivePoint((x, 1.0 - y)) for x, y in points]
    front_vals = {p.values for p in pareto_front(min_pts)}
    front = [(x, y) for x, y in points if (x, 1.0 - y) in front_vals]
    svg = scatter_svg(points, front, fairness_key, effectiveness_key)
    _write_atomic(out, svg)
    return out


def _parse_sensitive(values: list[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in values:
        if "=" not in item:
            raise ConfigError(f"--sensitive expects name=privileged_value, got {item!r}")
        name, _, raw = item.partition("=")
        try:
            out[name] = float(raw)
        except ValueError:
            raise ConfigError(f"privileged value for {name!r} must be numeric") from None
    return out


def build_scenario(args) -> ScenarioConfig:
    file_cfg: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    sensitive = _parse_sensitive(args.sensitive) if args.sensitive else file_cfg.get("sensitive")
    if not sensitive:
        raise ConfigError("a sensitive column is required (--sensitive name=value)")
    data = pick(args.data, "data", None)
    label = pick(args.label, "label", None)
    if not data or not label:
        raise ConfigError("--data and --label are required (flags or config file)")
    seed = pick(args.seed, "seed", 0)
    if os.environ.get(SEED_ENV_VAR):
        seed = int(os.environ[SEED_ENV_VAR])
    search = SearchConfig(
        population_size=pick(args.pop, "population_size", 50),
        generations=pick(args.gens, "generations", 25),
        crossover_prob=file_cfg.get("crossover_prob", 0.6),
        mutation_prob=file_cfg.get("mutation_prob", 0.2),
        inner_mutation_prob=file_cfg.get("inner_mutation_prob", 1.0 / 6.0),
        parents_per_generation=file_cfg.get("parents_per_generation", 5),
        seed=seed,
    )
    return ScenarioConfig(
        data=data,
        schema=DatasetSchema(
            label=label,
            positive=pick(args.positive, "positive", 1.0),
            sensitive={k: float(v) for k, v in sensitive.items()},
        ),
        method=pick(args.method, "method", "fairrf"),
        runs=pick(args.runs, "runs", 20),
        seed=seed,
        out=pick(args.out, "out", "results"),
        jobs=pick(args.jobs, "jobs", 1),
        search=search,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsearch",
        description="Multi-objective search for fair and effective forests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one method on one scenario")
    run.add_argument("--data", help="path to the encoded CSV dataset")
    run.add_argument("--label", help="label column name")
    run.add_argument("--positive", type=float, help="raw label value meaning positive")
    run.add_argument(
        "--sensitive",
        action="append",
        metavar="NAME=PRIVILEGED",
        help="sensitive column and its privileged raw value (repeatable)",
    )
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--runs", type=int, help="number of seeded repetitions")
    run.add_argument("--seed", type=int, help="base seed (env FAIRSEARCH_SEED overrides)")
    run.add_argument("--pop", type=int, help="population size")
    run.add_argument("--gens", type=int, help="generation count")
    run.add_argument("--jobs", type=int, help="parallel runs")
    run.add_argument("--out", help="output directory")
    run.add_argument("--config", help="JSON config file (flags override)")

    analyze = sub.add_parser("analyze", help="compare result directories")
    analyze.add_argument("dirs", nargs="+", help="result directories; first is the target")
    analyze.add_argument("--out", required=True, help="report directory")
    analyze.add_argument(
        "--pairs",
        action="append",
        metavar="EFF:FAIR",
        help="metric pair like accuracy:spd.age (repeatable; default all)",
    )

    plot = sub.add_parser("plot", help="scatter solutions of one results directory")
    plot.add_argument("dir", help="results directory")
    plot.add_argument("--out", required=True, help="output SVG path")
    plot.add_argument("--x", default=None, help="fairness metric for the x axis")
    plot.add_argument("--y", default="accuracy", help="effectiveness metric for the y axis")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            scenario = build_scenario(args)
            written = cmd_run(scenario)
            print(f"wrote {len(written)} files to {scenario.out}")
        elif args.command == "analyze":
            pairs = None
            if args.pairs:
                pairs = []
                for item in args.pairs:
                    if ":" not in item:
                        raise ConfigError(f"--pairs expects EFF:FAIR, got {item!r}")
                    eff, _, fair = item.partition(":")
                    pairs.append((eff, fair))
            written = cmd_analyze(args.dirs, args.out, pairs)
            print(f"wrote {len(written)} report files to {args.out}")
        else:
            x = args.x
            if x is None:
                runs = load_run_dir(args.dir)
                flat = runs[0].solutions[0].test_metrics.to_flat_dict()
                fairness = [k for k in flat if is_fairness_metric(k)]
                if not fairness:
                    raise ConfigError("no fairness metric found to plot")
                x = fairness[0]
            path = cmd_plot(args.dir, args.out, x, args.y)
            print(f"wrote {path}")
    except (FairsearchError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
