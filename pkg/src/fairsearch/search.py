"""NSGA-II search over forest hyperparameters and a training-data
sensitive-attribute mutation fraction.

Each individual couples a mutation fraction with one point of the forest
tuning grid (13,230 genomes in total). Fitness is computed on the
validation partition only: accuracy (maximized) and mean absolute
statistical parity difference (minimized), both weighted equally.
Evaluation is a pure function of (genome, table, splits, seed), so
fitness values are cached by genome and offspring may be evaluated in
parallel without changing any result.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .dataset import MUTATION_FRACTIONS, SplitIndices, Table, mutate_sensitive, split, table_from_arrays
from .errors import ConfigError, MetricUndefinedError, ParameterError
from .forest import (
    CRITERION_DOMAIN,
    MAX_DEPTH_DOMAIN,
    MAX_FEATURES_DOMAIN,
    MIN_SAMPLES_SPLIT_DOMAIN,
    N_ESTIMATORS_DOMAIN,
    ForestHyperparams,
    fit_forest,
    predict,
)
from .metrics import MetricsRecord, compute_record, spd
from .rng import derive_seed, rng_from

GENE_ORDER = (
    "mutation_value",
    "n_estimators",
    "criterion",
    "max_depth",
    "min_samples_split",
    "max_features",
)
GENE_DOMAINS: dict[str, tuple] = {
    "mutation_value": MUTATION_FRACTIONS,
    "n_estimators": N_ESTIMATORS_DOMAIN,
    "criterion": CRITERION_DOMAIN,
    "max_depth": MAX_DEPTH_DOMAIN,
    "min_samples_split": MIN_SAMPLES_SPLIT_DOMAIN,
    "max_features": MAX_FEATURES_DOMAIN,
}
SEARCH_SPACE_SIZE = math.prod(len(d) for d in GENE_DOMAINS.values())  # 13,230
HYPERPARAM_GRID_SIZE = SEARCH_SPACE_SIZE // len(MUTATION_FRACTIONS)  # 1,323


@dataclass(frozen=True)
class Genome:
    """One candidate: data-mutation fraction plus forest hyperparameters."""

    mutation_value: float
    hp: ForestHyperparams = field(default_factory=ForestHyperparams)

    def __post_init__(self):
        for name, gene in zip(GENE_ORDER, self.genes()):
            if gene not in GENE_DOMAINS[name]:
                raise ParameterError(f"gene {name}={gene!r} not in {GENE_DOMAINS[name]}")

    def genes(self) -> tuple:
        return (
            self.mutation_value,
            self.hp.n_estimators,
            self.hp.criterion,
            self.hp.max_depth,
            self.hp.min_samples_split,
            self.hp.max_features,
        )

    @classmethod
    def from_genes(cls, genes) -> "Genome":
        mv, n_est, crit, depth, mss, mf = genes
        return cls(mv, ForestHyperparams(n_est, crit, depth, mss, mf))

    def key(self) -> tuple:
        return self.genes()

    def to_dict(self) -> dict:
        return dict(zip(GENE_ORDER, self.genes()))

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        genes = [d[name] for name in GENE_ORDER]
        genes[0] = round(float(genes[0]), 1)
        return cls.from_genes(genes)


@dataclass(frozen=True)
class Fitness:
    """Validation-partition objectives: accuracy up, |SPD| down."""

    accuracy: float
    abs_spd: float

    def min_space(self) -> tuple[float, float]:
        return (1.0 - self.accuracy, self.abs_spd)

    def dominates(self, other: "Fitness") -> bool:
        no_worse = self.accuracy >= other.accuracy and self.abs_spd <= other.abs_spd
        better = self.accuracy > other.accuracy or self.abs_spd < other.abs_spd
        return no_worse and better


@dataclass
class EvaluatedIndividual:
    genome: Genome
    fitness: Fitness
    rank: int = 0
    crowding: float = math.inf


@dataclass(frozen=True)
class SearchConfig:
    """Evolution parameters; the defaults are the reference configuration."""

    population_size: int = 50
    generations: int = 25
    crossover_prob: float = 0.6
    mutation_prob: float = 0.2
    inner_mutation_prob: float = 1.0 / 6.0
    parents_per_generation: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("crossover_prob", "mutation_prob", "inner_mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p!r} outside [0, 1]")
        if self.population_size < 1 or self.generations < 0:
            raise ConfigError("population_size must be >= 1 and generations >= 0")
        if self.parents_per_generation < 1:
            raise ConfigError("parents_per_generation must be >= 1")


def random_genome(rng) -> Genome:
    """One genome with each gene uniform over its domain."""
    genes = [domain[rng.integers(len(domain))] for domain in GENE_DOMAINS.values()]
    return Genome.from_genes(genes)


def init_population(config: SearchConfig) -> list[Genome]:
    """population_size pairwise-distinct genomes; collisions are resampled."""
    if config.population_size > SEARCH_SPACE_SIZE:
        raise ConfigError(
            f"population_size {config.population_size} exceeds the "
            f"{SEARCH_SPACE_SIZE}-genome search space"
        )
    rng = rng_from(config.seed, "init")
    seen: set[tuple] = set()
    population: list[Genome] = []
    while len(population) < config.population_size:
        g = random_genome(rng)
        if g.key() not in seen:
            seen.add(g.key())
            population.append(g)
    return population


def crossover(a: Genome, b: Genome, rng, prob: float = 0.6) -> tuple[Genome, Genome]:
    """Single-point crossover of the 6-gene sequence with the given
    probability; otherwise the children are copies of the parents."""
    if rng.random() >= prob:
        return a, b
    k = int(rng.integers(1, len(GENE_ORDER)))
    ga, gb = a.genes(), b.genes()
    return Genome.from_genes(ga[:k] + gb[k:]), Genome.from_genes(gb[:k] + ga[k:])


def mutate(g: Genome, rng, prob: float = 0.2, inner_prob: float = 1.0 / 6.0) -> Genome:
    """With probability ``prob``, resample each gene independently with
    probability ``inner_prob`` from its full domain (the fresh draw may
    repeat the current value)."""
    if rng.random() >= prob:
        return g
    genes = list(g.genes())
    for i, name in enumerate(GENE_ORDER):
        if rng.random() < inner_prob:
            domain = GENE_DOMAINS[name]
            genes[i] = domain[rng.integers(len(domain))]
    return Genome.from_genes(genes)


def evaluate(genome: Genome, table: Table, splits: SplitIndices, seed: int) -> Fitness:
    """Mutate the training rows' sensitive cells, fit the forest, and score
    the untouched validation partition.

    An absent validation group makes SPD undefined; that genome is
    penalized with the worst value 1.0 instead of failing, so evolution
    stays total.
    """
    mutated = mutate_sensitive(
        table, splits.train, genome.mutation_value, derive_seed(seed, "mut", genome.key())
    )
    model = fit_forest(
        mutated.features[splits.train],
        mutated.labels[splits.train],
        genome.hp,
        derive_seed(seed, "fit", genome.key()),
    )
    y_pred = predict(model, table.features[splits.validation])
    y_val = table.labels[splits.validation]
    accuracy = float(np.mean(y_pred == y_val))
    spds = []
    for vec in table.sensitive.values():
        try:
            spds.append(spd(y_pred, vec[splits.validation]))
        except MetricUndefinedError:
            spds.append(1.0)
    return Fitness(accuracy=accuracy, abs_spd=float(np.mean(spds)))


def fast_non_dominated_sort(fitnesses: list[Fitness]) -> list[int]:
    """Non-domination rank per individual (0 = non-dominated)."""
    n = len(fitnesses)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if fitnesses[i].dominates(fitnesses[j]):
                dominated_by[i].append(j)
                domination_count[j] += 1
            elif fitnesses[j].dominates(fitnesses[i]):
                dominated_by[j].append(i)
                domination_count[i] += 1
    ranks = [0] * n
    current = [i for i in range(n) if domination_count[i] == 0]
    rank = 0
    while current:
        nxt = []
        for i in current:
            ranks[i] = rank
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        current = nxt
        rank += 1
    return ranks


def crowding_distances(fitnesses: list[Fitness], members: list[int]) -> dict[int, float]:
    """Crowding distance within one front; extremes get infinity."""
    if len(members) <= 2:
        return {i: math.inf for i in members}
    out = {i: 0.0 for i in members}
    for axis in range(2):
        ordered = sorted(members, key=lambda i: fitnesses[i].min_space()[axis])
        values = [fitnesses[i].min_space()[axis] for i in ordered]
        span = values[-1] - values[0]
        out[ordered[0]] = out[ordered[-1]] = math.inf
        if span == 0.0:
            continue
        for pos in range(1, len(ordered) - 1):
            if out[ordered[pos]] != math.inf:
                out[ordered[pos]] += (values[pos + 1] - values[pos - 1]) / span
    return out


# worker-process context for parallel fitness evaluation
_WORKER_CTX: tuple[Table, SplitIndices, int] | None = None


def _init_worker(table, splits, seed):
    global _WORKER_CTX
    _WORKER_CTX = (table, splits, seed)


def _worker_evaluate(genes: tuple) -> tuple[tuple, Fitness]:
    table, splits, seed = _WORKER_CTX
    return genes, evaluate(Genome.from_genes(genes), table, splits, seed)


class _FitnessCache:
    """Genome-keyed fitness cache; duplicates are never re-evaluated."""

    def __init__(self, table, splits, seed, executor=None):
        self.table = table
        self.splits = splits
        self.seed = seed
        self.executor = executor
        self.store: dict[tuple, Fitness] = {}
        self.new_evaluations = 0

    def evaluate_all(self, genomes: list[Genome]) -> list[Fitness]:
        fresh: list[tuple] = []
        for g in genomes:
            if g.key() not in self.store and g.key() not in fresh:
                fresh.append(g.key())
        if fresh:
            self.new_evaluations += len(fresh)
            if self.executor is not None:
                results = self.executor.map(_worker_evaluate, fresh)
                for key, fitness in results:
                    self.store[key] = fitness
            else:
                for key in fresh:
                    self.store[key] = evaluate(
                        Genome.from_genes(key), self.table, self.splits, self.seed
                    )
        return [self.store[g.key()] for g in genomes]


def _rank0_front(
    genomes: list[Genome], fitnesses: list[Fitness], deduplicate: bool = True
) -> list[EvaluatedIndividual]:
    ranks = fast_non_dominated_sort(fitnesses)
    members = [i for i, r in enumerate(ranks) if r == 0]
    crowd = crowding_distances(fitnesses, members)
    front = []
    seen: set[tuple] = set()
    for i in members:
        key = genomes[i].key()
        if deduplicate and key in seen:
            continue
        seen.add(key)
        front.append(EvaluatedIndividual(genomes[i], fitnesses[i], 0, crowd[i]))
    return front


def _tournament_pick(rng, ranks, crowd, n) -> int:
    i = int(rng.integers(n))
    j = int(rng.integers(n))
    if (ranks[i], -crowd[i]) <= (ranks[j], -crowd[j]):
        return i
    return j


def nsga2_run(
    table: Table,
    splits: SplitIndices,
    config: SearchConfig,
    n_jobs: int = 1,
    telemetry: dict | None = None,
) -> list[EvaluatedIndividual]:
    """Full evolution; returns the final population's rank-0 set,
    deduplicated by genome.

    ``telemetry``, when given, receives per-generation counts of fresh
    fitness evaluations and the rank-0 hypervolume history (fixed
    reference (1.5, 1.5) in minimization space).
    """
    from .analysis import ObjectivePoint, hypervolume2d, pareto_front

    executor = None
    if n_jobs > 1:
        executor = ProcessPoolExecutor(
            max_workers=n_jobs,
            initializer=_init_worker,
            initargs=(table, splits, config.seed),
        )
    try:
        cache = _FitnessCache(table, splits, config.seed, executor)
        rng = rng_from(config.seed, "evolve")
        population = init_population(config)
        fitnesses = cache.evaluate_all(population)

        hv_history: list[float] = []
        new_eval_history: list[int] = []
        reference = ObjectivePoint((1.5, 1.5))

        def record_hv():
            points = [ObjectivePoint(f.min_space()) for f in fitnesses]
            hv_history.append(hypervolume2d(pareto_front(points), reference))

        record_hv()
        for _ in range(config.generations):
            before = cache.new_evaluations
            ranks = fast_non_dominated_sort(fitnesses)
            crowd_all: dict[int, float] = {}
            for r in set(ranks):
                members = [i for i, rr in enumerate(ranks) if rr == r]
                crowd_all.update(crowding_distances(fitnesses, members))

            parents = [
                population[_tournament_pick(rng, ranks, crowd_all, len(population))]
                for _ in range(config.parents_per_generation)
            ]
            pairs = [
                (parents[2 * i], parents[2 * i + 1]) for i in range(len(parents) // 2)
            ]
            if len(parents) % 2 == 1 and len(parents) > 1:
                pairs.append((parents[-1], parents[0]))
            elif len(parents) == 1:
                pairs.append((parents[0], parents[0]))

            offspring: list[Genome] = []
            for pa, pb in pairs:
                c1, c2 = crossover(pa, pb, rng, config.crossover_prob)
                offspring.append(mutate(c1, rng, config.mutation_prob, config.inner_mutation_prob))
                offspring.append(mutate(c2, rng, config.mutation_prob, config.inner_mutation_prob))
            offspring_fit = cache.evaluate_all(offspring)

            combined = population + offspring
            combined_fit = fitnesses + offspring_fit
            comb_ranks = fast_non_dominated_sort(combined_fit)
            next_idx: list[int] = []
            for r in itertools.count():
                members = [i for i, rr in enumerate(comb_ranks) if rr == r]
                if not members:
                    break
                if len(next_idx) + len(members) <= config.population_size:
                    next_idx.extend(members)
                else:
                    crowd = crowding_distances(combined_fit, members)
                    members.sort(key=lambda i: (-crowd[i], i))
                    next_idx.extend(members[: config.population_size - len(next_idx)])
                    break
            population = [combined[i] for i in next_idx]
            fitnesses = [combined_fit[i] for i in next_idx]
            new_eval_history.append(cache.new_evaluations - before)
            record_hv()

        if telemetry is not None:
            telemetry["new_evaluations_per_generation"] = new_eval_history
            telemetry["rank0_hypervolume_per_generation"] = hv_history
            telemetry["total_evaluations"] = cache.new_evaluations
        return _rank0_front(population, fitnesses)
    finally:
        if executor is not None:
            executor.shutdown()


def random_search(
    table: Table,
    splits: SplitIndices,
    budget_per_iteration: int = 6,
    iterations: int = 25,
    seed: int = 0,
    telemetry: dict | None = None,
) -> list[EvaluatedIndividual]:
    """Uniform random baseline with the same per-iteration budget as one
    evolution generation; returns the non-dominated subset of all draws."""
    rng = rng_from(seed, "random-search")
    genomes = [random_genome(rng) for _ in range(budget_per_iteration * iterations)]
    cache = _FitnessCache(table, splits, seed)
    fitnesses = cache.evaluate_all(genomes)
    if telemetry is not None:
        telemetry["total_evaluations"] = len(genomes)
        telemetry["unique_evaluations"] = cache.new_evaluations
    return _rank0_front(genomes, fitnesses)


def _test_record(
    table: Table,
    splits: SplitIndices,
    hp: ForestHyperparams,
    seed: int,
    train_rows: np.ndarray,
    mutation_value: float | None = None,
) -> MetricsRecord:
    """Train on the given rows (optionally with sensitive-cell mutation)
    and score the test partition with the full metric set."""
    work = table
    if mutation_value is not None:
        work = mutate_sensitive(table, train_rows, mutation_value, derive_seed(seed, "final-mut"))
    model = fit_forest(
        work.features[train_rows], work.labels[train_rows], hp, derive_seed(seed, "final-fit")
    )
    y_pred = predict(model, table.features[splits.test])
    y_test = table.labels[splits.test]
    sensitive = {name: vec[splits.test] for name, vec in table.sensitive.items()}
    return compute_record(y_test, y_pred, sensitive)


def finalize_front(
    front: list[EvaluatedIndividual], table: Table, splits: SplitIndices, seed: int
) -> list[tuple[Genome, MetricsRecord]]:
    """Re-run each front genome with train+validation as training rows and
    score it on the held-out test partition. The front is reported as
    selected on validation; no re-filtering by test dominance."""
    if not front:
        raise ParameterError("cannot finalize an empty front")
    rows80 = np.concatenate([splits.train, splits.validation])
    out = []
    for ind in front:
        record = _test_record(
            table,
            splits,
            ind.genome.hp,
            derive_seed(seed, "finalize", ind.genome.key()),
            rows80,
            mutation_value=ind.genome.mutation_value,
        )
        out.append((ind.genome, record))
    return out


def default_forest_baseline(
    table: Table, splits: SplitIndices, seed: int
) -> tuple[ForestHyperparams, MetricsRecord]:
    """Untuned forest trained on the unmutated 80% partition."""
    hp = ForestHyperparams()
    rows80 = np.concatenate([splits.train, splits.validation])
    return hp, _test_record(table, splits, hp, derive_seed(seed, "default-rf"), rows80)


def grid_search_baseline(
    table: Table,
    splits: SplitIndices,
    grid: dict[str, tuple] | None = None,
    seed: int = 0,
) -> tuple[ForestHyperparams, MetricsRecord]:
    """Exhaustive hyperparameter sweep on the unmutated training set.

    Selects the configuration with the best validation accuracy (ties go
    to the first configuration in lexicographic gene order), retrains it
    on train+validation, and reports test metrics.
    """
    domains = dict(GENE_DOMAINS)
    domains.pop("mutation_value")
    if grid:
        for name, values in grid.items():
            if name not in domains:
                raise ConfigError(f"unknown hyperparameter {name!r}")
            domains[name] = tuple(values)
    if any(len(v) == 0 for v in domains.values()):
        raise ConfigError("grid domains must be non-empty")

    y_val = table.labels[splits.validation]
    best_hp = None
    best_acc = -1.0
    for combo in itertools.product(*(domains[k] for k in domains)):
        hp = ForestHyperparams(*combo)
        model = fit_forest(
            table.features[splits.train],
            table.labels[splits.train],
            hp,
            derive_seed(seed, "grid", combo),
        )
        acc = float(np.mean(predict(model, table.features[splits.validation]) == y_val))
        if acc > best_acc:
            best_acc = acc
            best_hp = hp
    rows80 = np.concatenate([splits.train, splits.validation])
    record = _test_record(table, splits, best_hp, derive_seed(seed, "grid-final"), rows80)
    return best_hp, record


class FairSearch(BaseEstimator):
    """Estimator facade over the evolutionary search.

    ``fit(X, y, sensitive_features=...)`` appends the sensitive columns to
    X (the forests consume them), splits the data, evolves, finalizes the
    front on train+validation, and exposes ``front_`` (validation
    fitness) and ``solutions_`` (genome, test MetricsRecord) pairs.
    """

    def __init__(
        self,
        population_size: int = 50,
        generations: int = 25,
        crossover_prob: float = 0.6,
        mutation_prob: float = 0.2,
        inner_mutation_prob: float = 1.0 / 6.0,
        parents_per_generation: int = 5,
        random_state: int = 0,
        n_jobs: int = 1,
    ):
        self.population_size = population_size
        self.generations = generations
        self.crossover_prob = crossover_prob
        self.mutation_prob = mutation_prob
        self.inner_mutation_prob = inner_mutation_prob
        self.parents_per_generation = parents_per_generation
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self) -> SearchConfig:
        return SearchConfig(
            population_size=self.population_size,
            generations=self.generations,
            crossover_prob=self.crossover_prob,
            mutation_prob=self.mutation_prob,
            inner_mutation_prob=self.inner_mutation_prob,
            parents_per_generation=self.parents_per_generation,
            seed=self.random_state,
        )

    def fit(self, X, y, sensitive_features: dict | None = None):
        if not sensitive_features:
            raise ParameterError("fit requires sensitive_features={name: binary vector}")
        table = table_from_arrays(X, y, sensitive_features)
        splits = split(table, self.random_state)
        front = nsga2_run(table, splits, self._config(), n_jobs=self.n_jobs)
        self.table_ = table
        self.splits_ = splits
        self.front_ = front
        self.solutions_ = finalize_front(front, table, splits, self._config().seed)
        return self
