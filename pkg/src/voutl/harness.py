"""Experiment sweeps, CSV output and aggregation of windowed LQG costs."""
from __future__ import annotations

import configparser
import csv
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import netsim
from .admission import PolicyConfig, PolicyKind

SCHEMA_LINE = "# schema=1"
RAW_FIELDS = ["scenario", "policy", "lambda", "t_pr", "loops", "seed", "window_q", "lqg_cost"]
RUN_FIELDS = ["scenario", "policy", "lambda", "t_pr", "loops", "seed", "mean_aoi",
              "admission_rate", "decision_time"]
LOOP_FIELDS = ["scenario", "policy", "lambda", "t_pr", "loops", "seed", "loop", "lqg_cost"]
CI_LEVEL = 0.95


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    scenario: str
    policies: list
    seeds: list
    lambdas: dict = field(default_factory=dict)
    t_pr: list = field(default_factory=lambda: [10])
    loops: list = field(default_factory=lambda: [3])
    proc_delay_ms: list = field(default_factory=lambda: [0.0])
    adapt_threshold: bool = False
    steps: int = 8000
    scenario_params: dict = field(default_factory=dict)
    output: str = "results"

    def __post_init__(self):
        if not self.policies:
            raise SpecError("policy list is empty")
        if not self.seeds:
            raise SpecError("seed list is empty")
        if self.scenario not in netsim.SCENARIOS:
            raise SpecError(f"unknown scenario {self.scenario!r}; "
                            f"choose from {sorted(netsim.SCENARIOS)}")
        try:
            self.policies = [PolicyKind(p) if isinstance(p, str) else p for p in self.policies]
        except ValueError as exc:
            raise SpecError(str(exc)) from None
        for key in self.lambdas:
            name, _, horizon = key.partition("@")
            try:
                kind = PolicyKind(name)
                if horizon and int(horizon) < 1:
                    raise ValueError(f"bad horizon in {key!r}")
            except ValueError as exc:
                raise SpecError(str(exc)) from None
            if kind not in self.policies:
                raise SpecError(f"lambda grid given for unused policy {name}")
        if any(t < 1 for t in self.t_pr) or not self.t_pr:
            raise SpecError("prediction horizons must be positive")
        if any(n < 1 for n in self.loops) or not self.loops:
            raise SpecError("loop counts must be positive")

    def lambda_grid(self, kind: PolicyKind, t_pr: int | None = None) -> list:
        """Grid for ``kind``; a ``Policy@T_pr`` entry overrides the plain one."""
        grid = self.lambdas.get(f"{kind.value}@{t_pr}") or self.lambdas.get(kind.value, [1.0])
        return list(grid) if kind.uses_threshold else grid[:1]

    def cells(self) -> list:
        """Sweep grid in a fixed order: loops, policy, delay, lambda, horizon."""
        out = []
        for loops, kind in itertools.product(self.loops, self.policies):
            horizons = self.t_pr if kind.is_dynamic else [10]
            for delay in self.proc_delay_ms:
                for lam, t_pr in self._lambda_horizon_pairs(kind, horizons):
                    policy = PolicyConfig(kind, lam=float(lam), t_pr=int(t_pr),
                                          proc_delay_ms=float(delay),
                                          adapt_threshold=self.adapt_threshold)
                    out.append(Cell(self.scenario, loops, policy))
        return out

    def _lambda_horizon_pairs(self, kind, horizons):
        if not any(f"{kind.value}@{t}" in self.lambdas for t in horizons):
            return itertools.product(self.lambda_grid(kind), horizons)
        return [(lam, t) for t in horizons for lam in self.lambda_grid(kind, t)]

    def scenario_config(self, loops: int, seed: int) -> netsim.ScenarioConfig:
        factory = netsim.SCENARIOS[self.scenario]
        try:
            return factory(loops=loops, steps=self.steps, seed=seed, **self.scenario_params)
        except TypeError as exc:
            raise SpecError(f"bad scenario parameter: {exc}") from None


@dataclass(frozen=True)
class Cell:
    scenario: str
    loops: int
    policy: PolicyConfig

    @property
    def label(self) -> str:
        return policy_label(self.policy)

    def key(self) -> tuple:
        return (self.scenario, self.label, fmt(self.policy.lam), str(self.policy.t_pr),
                str(self.loops))


def policy_label(policy: PolicyConfig) -> str:
    """Policy name, tagged with the artificial processing delay when there is one."""
    if policy.proc_delay_ms > 0:
        return f"{policy.kind.value}+{policy.proc_delay_ms:g}ms"
    return policy.kind.value


@dataclass
class AggregateRow:
    scenario: str
    policy: str
    lam: float
    t_pr: int
    loops: int
    seeds: int
    mean: float
    median: float
    ci_lo: float
    ci_hi: float
    mean_aoi: float
    admission_rate: float
    decision_time: float


AGG_FIELDS = [f.name for f in fields(AggregateRow)]


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# parsing -------------------------------------------------------------------

def parse_list(text: str, cast=float) -> list:
    """Comma separated values; integers may use ``a-b`` ranges."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if cast is int and "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(cast(part))
    return out


def _scalar(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def load_spec(path) -> ExperimentSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise SpecError(f"cannot read config {path}")
    if "experiment" not in parser:
        raise SpecError("config needs an [experiment] section")
    ex = parser["experiment"]
    try:
        spec = ExperimentSpec(
            name=ex.get("name", Path(path).stem),
            scenario=ex["scenario"],
            policies=[p.strip() for p in ex["policies"].split(",") if p.strip()],
            seeds=parse_list(ex.get("seeds", "0"), int),
            lambdas={k: parse_list(v) for k, v in parser["lambdas"].items()}
            if "lambdas" in parser else {},
            t_pr=parse_list(ex.get("t_pr", "10"), int),
            loops=parse_list(ex.get("loops", "3"), int),
            proc_delay_ms=parse_list(ex.get("proc_delay_ms", "0")),
            adapt_threshold=ex.getboolean("adapt_threshold", False),
            steps=ex.getint("steps", 8000),
            scenario_params={k: _scalar(v) for k, v in parser["scenario"].items()}
            if "scenario" in parser else {},
            output=ex.get("output", "results"),
        )
    except KeyError as exc:
        raise SpecError(f"missing key {exc} in [experiment]") from None
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    return spec


# running -------------------------------------------------------------------

@dataclass
class RunSummary:
    cell: Cell
    seed: int
    window_costs: list
    loop_costs: list
    mean_aoi: float
    admission_rate: float
    decision_time: float


def run_cell(spec: ExperimentSpec, cell: Cell, seed: int) -> RunSummary:
    config = spec.scenario_config(cell.loops, seed)
    with np.errstate(over="ignore", invalid="ignore"):
        res = netsim.run(config, cell.policy)
        windows = res.window_costs.mean(axis=0) if res.window_costs.size else np.array([])
        loop_costs = res.window_costs.mean(axis=1) if res.window_costs.size else np.array([])
    return RunSummary(cell, seed, [float(c) for c in windows], [float(c) for c in loop_costs],
                      res.mean_aoi, res.admission_rate, res.mean_decision_time)


def _task(args):
    return run_cell(*args)


def _writer(path: Path, header: list):
    fh = open(path, "w", newline="")
    fh.write(SCHEMA_LINE + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def run_experiment(spec: ExperimentSpec, out_dir=None, workers: int | None = None,
                   progress=None) -> Path:
    """Run every (cell, seed) and write raw, per-run, per-loop and aggregate CSVs."""
    out = Path(out_dir or os.environ.get("RESULT_DIR") or spec.output)
    out.mkdir(parents=True, exist_ok=True)
    for seed in spec.seeds:
        spec.scenario_config(spec.loops[0], seed).validate()
    tasks = [(spec, cell, seed) for cell in spec.cells() for seed in spec.seeds]
    workers = workers or (os.cpu_count() or 1)
    summaries = []
    raw_fh, raw = _writer(out / "raw.csv", RAW_FIELDS)
    run_fh, runs = _writer(out / "runs.csv", RUN_FIELDS)
    loop_fh, loops = _writer(out / "loops.csv", LOOP_FIELDS)
    try:
        if workers > 1 and len(tasks) > 1:
            pool = ProcessPoolExecutor(max_workers=workers)
            results = pool.map(_task, tasks, chunksize=1)
        else:
            pool = None
            results = map(_task, tasks)
        try:
            for s in results:
                summaries.append(s)
                _write_run(s, raw, runs, loops)
                raw_fh.flush()
                if progress:
                    progress(len(summaries), len(tasks), s)
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
    finally:
        raw_fh.close()
        run_fh.close()
        loop_fh.close()
    write_aggregate(out / "aggregate.csv", aggregate(summaries))
    return out


def _write_run(s: RunSummary, raw, runs, loops) -> None:
    head = [*s.cell.key()[:2], fmt(s.cell.policy.lam), s.cell.policy.t_pr, s.cell.loops, s.seed]
    for q, cost in enumerate(s.window_costs):
        raw.writerow([*head, q, fmt(cost)])
    runs.writerow([*head, fmt(s.mean_aoi), fmt(s.admission_rate), fmt(s.decision_time)])
    for i, cost in enumerate(s.loop_costs):
        loops.writerow([*head, i, fmt(cost)])


# aggregation ---------------------------------------------------------------

def confidence_interval(samples, level: float = CI_LEVEL) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    if len(x) < 2 or not np.all(np.isfinite(x)):
        if len(x) == 1 and np.isfinite(x[0]):
            return float(x[0]), float(x[0])
        return (math.nan, math.nan) if not len(x) else (-math.inf, math.inf)
    mean = float(x.mean())
    half = float(sps.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return mean - half, mean + half


def _fold(key, costs, extras) -> AggregateRow:
    scenario, policy, lam, t_pr, loops = key
    costs = np.asarray(costs, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        lo, hi = confidence_interval(costs)
        mean = float(np.mean(costs))
        median = float(np.median(costs))
    aoi, rate, dtime = (float(np.mean(v)) for v in zip(*extras)) if extras else (math.nan,) * 3
    return AggregateRow(scenario, policy, float(lam), int(t_pr), int(loops), len(extras), mean,
                        median, lo, hi, aoi, rate, dtime)


def aggregate(summaries) -> list[AggregateRow]:
    """One row per cell from the window samples of all its runs."""
    costs: dict = {}
    extras: dict = {}
    for s in summaries:
        key = s.cell.key()
        costs.setdefault(key, []).extend(s.window_costs)
        extras.setdefault(key, []).append((s.mean_aoi, s.admission_rate, s.decision_time))
    return [_fold(key, costs[key], extras[key]) for key in costs]


def write_aggregate(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_FIELDS)
        for row in rows:
            w.writerow([fmt(v) for v in asdict(row).values()])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise SpecError(f"{path}: expected '{SCHEMA_LINE}', found {first!r}")
        return list(csv.DictReader(fh))


def read_aggregate(path) -> list[AggregateRow]:
    rows = []
    for r in read_csv(path):
        rows.append(AggregateRow(
            r["scenario"], r["policy"], float(r["lam"]), int(r["t_pr"]), int(r["loops"]),
            int(r["seeds"]), *(float(r[k]) for k in AGG_FIELDS[6:])))
    return rows


def aggregate_from_files(directory) -> list[AggregateRow]:
    """Recompute aggregate rows from ``raw.csv`` and ``runs.csv``."""
    directory = Path(directory)
    key_of = lambda r: (r["scenario"], r["policy"], r["lambda"], r["t_pr"], r["loops"])
    costs: dict = {}
    for r in read_csv(directory / "raw.csv"):
        costs.setdefault(key_of(r), []).append(float(r["lqg_cost"]))
    extras: dict = {}
    for r in read_csv(directory / "runs.csv"):
        extras.setdefault(key_of(r), []).append(
            (float(r["mean_aoi"]), float(r["admission_rate"]), float(r["decision_time"])))
    return [_fold(key, costs[key], extras.get(key, [])) for key in costs]


def verify(directory) -> list[str]:
    """Differences between ``aggregate.csv`` and a fresh fold of the raw files."""
    directory = Path(directory)
    stored = {(r.scenario, r.policy, r.lam, r.t_pr, r.loops): r
              for r in read_aggregate(directory / "aggregate.csv")}
    problems = []
    fresh = aggregate_from_files(directory)
    for row in fresh:
        key = (row.scenario, row.policy, row.lam, row.t_pr, row.loops)
        old = stored.pop(key, None)
        if old is None:
            problems.append(f"missing aggregate row for {key}")
            continue
        for name in AGG_FIELDS[5:]:
            a, b = getattr(old, name), getattr(row, name)
            if not (a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))):
                problems.append(f"{key} {name}: stored {a!r}, recomputed {b!r}")
    for key in stored:
        problems.append(f"aggregate row {key} has no raw samples")
    return problems


# comparison ----------------------------------------------------------------

@dataclass
class Comparison:
    improvement: float
    ci_disjoint: bool
    best_a: AggregateRow
    best_b: AggregateRow


def best_row(rows, policy: str, **match) -> AggregateRow:
    """Lowest-mean row of ``policy`` across its sweep (lambda, horizon, ...)."""
    cands = [r for r in rows if r.policy == policy
             and all(getattr(r, k) == v for k, v in match.items())]
    if not cands:
        raise KeyError(f"policy {policy!r} not in aggregate")
    return min(cands, key=lambda r: (r.mean, r.lam, r.t_pr))


def ci_disjoint(a: AggregateRow, b: AggregateRow) -> bool:
    return a.ci_hi < b.ci_lo or b.ci_hi < a.ci_lo


def compare_policies(rows, policy_a: str, policy_b: str, **match) -> Comparison:
    """Relative improvement of ``policy_a`` over ``policy_b`` at their best lambdas."""
    a = best_row(rows, policy_a, **match)
    b = best_row(rows, policy_b, **match)
    if a.mean == b.mean:
        improvement = 0.0
    else:
        improvement = (b.mean - a.mean) / b.mean
    return Comparison(improvement, ci_disjoint(a, b), a, b)
