"""The evolutionary engine.

Single-objective prior generation (SOGP), the multi-objective main
loop with knowledge transfer (MOGP), NSGA-II-style environmental
selection, checkpointing, and the fixed-fusion baselines.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import operators as ops
from .datamodel import ALL_FEATURE_IDS
from .fitness import (
    DEFAULT_RIDGE_LAMBDA,
    FitnessCache,
    FitnessPair,
    StackedSplit,
    predict,
    ridge_fit,
)
from .metrics import metric_report
from .program import (
    Program,
    eval_tree,
    from_text,
    init_population,
    subtree_crossover,
    subtree_mutation,
    to_text,
)

PRIOR_RUNS = 5
PRIOR_PICKS_PER_RUN = 10


@dataclass
class EvolveConfig:
    population: int = 200
    generations: int = 50
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    elitism_rate: float = 0.05
    tournament_size: int = 5
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
    seed: int = 100

    def __post_init__(self):
        if abs(self.crossover_rate + self.mutation_rate - 1.0) > 1e-12:
            raise ValueError("crossover_rate + mutation_rate must equal 1")
        if not 0 < self.elitism_rate < 1:
            raise ValueError("elitism_rate must be in (0, 1)")
        if self.population * self.elitism_rate < 1:
            raise ValueError("population * elitism_rate must be >= 1")

    @property
    def n_elites(self) -> int:
        return math.ceil(self.elitism_rate * self.population)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Individual:
    program: Program
    fit: FitnessPair

    @property
    def sort_key(self):
        # best-first on accuracy; ties to lower complexity, then id
        return (-self.fit.q_a, self.fit.q_c, self.program.id)


@dataclass
class GenerationStats:
    generation: int
    best_q_a: float
    mean_q_a: float
    min_q_c: float
    mean_q_c: float
    max_q_c: float
    front_size: int
    mu: float
    rng_digest: str

    FIELDS = (
        "generation",
        "best_q_a",
        "mean_q_a",
        "min_q_c",
        "mean_q_c",
        "max_q_c",
        "front_size",
        "mu",
        "rng_digest",
    )


@dataclass
class ParetoArchive:
    """Final non-dominated set with optional per-program metric reports."""

    entries: list[Individual]
    metrics: list[dict] = field(default_factory=list)

    def export_lines(self) -> str:
        return "".join(
            f"{ind.fit.q_a:.12g}\t{ind.fit.q_c:.12g}\t{to_text(ind.program)}\n"
            for ind in self.entries
        )


def update_mu(n_s: int, n_p: int) -> float:
    """Adaptive knowledge-transfer gate; 0/0 defines mu = 0.5."""
    if n_s + n_p == 0:
        return 0.5
    return min(1.0, 0.5 + n_p / (n_s + n_p))


def tournament(
    pop: list[Individual], size: int, rng: np.random.Generator
) -> Individual:
    """Accuracy tournament with replacement; ties to lower q_c, then id."""
    picks = rng.integers(len(pop), size=size)
    return min((pop[i] for i in picks), key=lambda ind: ind.sort_key)


def elites(pop: list[Individual], n: int) -> list[Individual]:
    """Top-n by accuracy (ties to lower q_c, then id); deterministic."""
    return sorted(pop, key=lambda ind: ind.sort_key)[:n]


def dominates(a: FitnessPair, b: FitnessPair) -> bool:
    """Pareto dominance: maximize q_a, minimize q_c."""
    return (
        a.q_a >= b.q_a
        and a.q_c <= b.q_c
        and (a.q_a > b.q_a or a.q_c < b.q_c)
    )


def fast_nondominated_sort(fits: list[FitnessPair]) -> list[list[int]]:
    """Deb's front peeling; returns fronts as index lists, best first."""
    n = len(fits)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    fronts = [[]]
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(fits[i], fits[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(fits[j], fits[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    for i in range(n):
        if counts[i] == 0:
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt = []
        for i in fronts[k]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        k += 1
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(fits: list[FitnessPair]) -> list[float]:
    """Two-objective crowding distance; boundary members get +inf."""
    n = len(fits)
    dist = [0.0] * n
    for key in (lambda f: f.q_a, lambda f: f.q_c):
        order = sorted(range(n), key=lambda i: key(fits[i]))
        lo, hi = key(fits[order[0]]), key(fits[order[-1]])
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue
        for rank in range(1, n - 1):
            i = order[rank]
            gap = key(fits[order[rank + 1]]) - key(fits[order[rank - 1]])
            dist[i] += gap / (hi - lo)
    return dist


def environmental_select(
    offspring: list[Individual], count: int
) -> list[Individual]:
    """Fill by fronts; split the last front by descending crowding distance."""
    if len(offspring) < count:
        raise ValueError(f"need at least {count} offspring, got {len(offspring)}")
    fronts = fast_nondominated_sort([ind.fit for ind in offspring])
    selected: list[Individual] = []
    for front in fronts:
        if len(selected) + len(front) <= count:
            selected.extend(offspring[i] for i in front)
            if len(selected) == count:
                break
            continue
        dist = crowding_distance([offspring[i].fit for i in front])
        ranked = sorted(
            range(len(front)),
            key=lambda k: (-dist[k], offspring[front[k]].program.id),
        )
        need = count - len(selected)
        selected.extend(offspring[front[k]] for k in ranked[:need])
        break
    return selected


def make_offspring(
    parents: list[Program],
    priors: list[Program],
    mu: float,
    cfg: EvolveConfig,
    rng: np.random.Generator,
) -> tuple[list[Program], int, int]:
    """Crossover with knowledge transfer / mutation; exactly N offspring.

    Returns (offspring, n_s, n_p): how often the crossover mate came
    from the selection population vs the prior pool.
    """
    n = len(parents)
    offspring = []
    n_s = n_p = 0
    for k in range(n):
        p1 = parents[k]
        if rng.random() < cfg.crossover_rate:
            if rng.random() < mu or not priors:
                p2 = parents[(k + 1) % n]
                n_s += 1
            else:
                p2 = priors[int(rng.integers(len(priors)))]
                n_p += 1
            child = subtree_crossover(p1, p2, rng)
        else:
            child = subtree_mutation(p1, rng)
        offspring.append(child)
    return offspring, n_s, n_p


def _rng_digest(rng: np.random.Generator) -> str:
    blob = json.dumps(rng.bit_generator.state, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _stats_row(
    generation: int, pop: list[Individual], mu: float, rng
) -> GenerationStats:
    q_a = [ind.fit.q_a for ind in pop]
    q_c = [ind.fit.q_c for ind in pop]
    front = fast_nondominated_sort([ind.fit for ind in pop])[0]
    return GenerationStats(
        generation=generation,
        best_q_a=max(q_a),
        mean_q_a=sum(q_a) / len(q_a),
        min_q_c=min(q_c),
        mean_q_c=sum(q_c) / len(q_c),
        max_q_c=max(q_c),
        front_size=len(front),
        mu=mu,
        rng_digest=_rng_digest(rng),
    )


# --------------------------------------------------------------------------
# Checkpointing


def _checkpoint_path(directory: str, generation: int) -> str:
    return os.path.join(directory, f"gen_{generation:04d}.json")


def save_checkpoint(
    directory: str,
    cfg: EvolveConfig,
    generation: int,
    pop: list[Individual],
    mu: float,
    rng: np.random.Generator,
    stats: list[GenerationStats],
) -> None:
    os.makedirs(directory, exist_ok=True)
    payload = {
        "config_digest": cfg.digest(),
        "generation": generation,
        "mu": mu,
        "population": [
            [to_text(ind.program), ind.fit.q_a, ind.fit.q_c] for ind in pop
        ],
        "rng_state": rng.bit_generator.state,
        "stats": [asdict(s) for s in stats],
    }
    path = _checkpoint_path(directory, generation)
    with open(path + ".tmp", "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(path + ".tmp", path)


def latest_checkpoint(directory: str):
    """Path of the newest complete checkpoint in `directory`, or None."""
    if not os.path.isdir(directory):
        return None
    names = sorted(
        n for n in os.listdir(directory)
        if n.startswith("gen_") and n.endswith(".json")
    )
    return os.path.join(directory, names[-1]) if names else None


def load_checkpoint(path: str, cfg: EvolveConfig):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload["config_digest"] != cfg.digest():
        raise ValueError(
            "checkpoint was written with a different configuration"
        )
    pop = [
        Individual(from_text(text), FitnessPair(q_a, q_c))
        for text, q_a, q_c in payload["population"]
    ]
    stats = [GenerationStats(**row) for row in payload["stats"]]
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    return payload["generation"], pop, payload["mu"], rng, stats


# --------------------------------------------------------------------------
# Engines


def run_mogp(
    cfg: EvolveConfig,
    train: StackedSplit,
    validation: StackedSplit,
    priors: list[Program] | None = None,
    rng: np.random.Generator | None = None,
    checkpoint_dir: str | None = None,
    resume: bool = False,
    workers: int = 1,
    attach_metrics: bool = True,
) -> tuple[ParetoArchive, list[GenerationStats]]:
    """The multi-objective main loop with knowledge transfer.

    Returns the final first front (deduplicated by serialization) and
    the per-generation stats log.
    """
    priors = list(priors or [])
    cache = FitnessCache(train, validation, cfg.ridge_lambda)
    stats: list[GenerationStats] = []

    start_gen = 0
    pop: list[Individual] = []
    mu = 0.5
    if resume and checkpoint_dir:
        ck = latest_checkpoint(checkpoint_dir)
        if ck is not None:
            start_gen, pop, mu, rng, stats = load_checkpoint(ck, cfg)
    if not pop:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        programs = init_population(cfg.population, rng)
        fits = cache.evaluate_many(programs, workers)
        pop = [Individual(p, f) for p, f in zip(programs, fits)]
        if checkpoint_dir:
            save_checkpoint(checkpoint_dir, cfg, 0, pop, mu, rng, stats)

    for g in range(start_gen + 1, cfg.generations + 1):
        cache.clear()  # memo is per-generation
        elite = elites(pop, cfg.n_elites)
        selection = [
            tournament(pop, cfg.tournament_size, rng).program
            for _ in range(cfg.population)
        ]
        children, n_s, n_p = make_offspring(selection, priors, mu, cfg, rng)
        fits = cache.evaluate_many(children, workers)
        offspring = [Individual(p, f) for p, f in zip(children, fits)]
        survivors = environmental_select(
            offspring, cfg.population - len(elite)
        )
        pop = survivors + elite
        mu = update_mu(n_s, n_p)
        stats.append(_stats_row(g, pop, mu, rng))
        if checkpoint_dir:
            save_checkpoint(checkpoint_dir, cfg, g, pop, mu, rng, stats)

    archive = _final_archive(pop)
    if attach_metrics:
        archive.metrics = [
            program_metrics(ind.program, train, validation, cfg.ridge_lambda)
            for ind in archive.entries
        ]
    return archive, stats


def _final_archive(pop: list[Individual]) -> ParetoArchive:
    front = fast_nondominated_sort([ind.fit for ind in pop])[0]
    seen = set()
    entries = []
    for ind in sorted((pop[i] for i in front), key=lambda ind: ind.sort_key):
        text = to_text(ind.program)
        if text not in seen:
            seen.add(text)
            entries.append(ind)
    return ParetoArchive(entries=entries)


def program_metrics(
    program: Program,
    train: StackedSplit,
    validation: StackedSplit,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> dict:
    """Fit on train, predict validation, report the six-metric suite."""
    fused_train = eval_tree(program, train.bank)
    fused_val = eval_tree(program, validation.bank)
    x = fused_train[train.mask]
    y = np.zeros((len(x), 8))
    y[np.arange(len(x)), train.labels[train.mask].astype(np.int64)] = 1.0
    clf = ridge_fit(x, y, ridge_lambda)
    preds = []
    for i in range(fused_val.shape[0]):
        preds.append(predict(clf, fused_val[i]))
    return metric_report(
        preds, list(validation.labels), list(validation.mask)
    )


def run_sogp(
    cfg: EvolveConfig,
    train: StackedSplit,
    validation: StackedSplit,
    rng: np.random.Generator | None = None,
    workers: int = 1,
    runs: int = PRIOR_RUNS,
    picks_per_run: int = PRIOR_PICKS_PER_RUN,
) -> list[Individual]:
    """Accuracy-only GP repeated `runs` times; pools the top programs.

    No complexity objective, no knowledge transfer: survivors are the
    best by q_a, and every crossover mate comes from the selection
    population.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    pool: list[Individual] = []
    for _ in range(runs):
        cache = FitnessCache(train, validation, cfg.ridge_lambda)
        programs = init_population(cfg.population, rng)
        fits = cache.evaluate_many(programs, workers)
        pop = [Individual(p, f) for p, f in zip(programs, fits)]
        for _ in range(cfg.generations):
            cache.clear()
            elite = elites(pop, cfg.n_elites)
            selection = [
                tournament(pop, cfg.tournament_size, rng).program
                for _ in range(cfg.population)
            ]
            children, _, _ = make_offspring(selection, [], 1.0, cfg, rng)
            fits = cache.evaluate_many(children, workers)
            offspring = [Individual(p, f) for p, f in zip(children, fits)]
            survivors = elites(offspring, cfg.population - len(elite))
            pop = survivors + elite
        seen = set()
        picked = 0
        for ind in sorted(pop, key=lambda ind: ind.sort_key):
            text = to_text(ind.program)
            if text in seen:
                continue
            seen.add(text)
            pool.append(ind)
            picked += 1
            if picked == picks_per_run:
                break
    return pool


# --------------------------------------------------------------------------
# Fixed-fusion baselines


def _fused_baselines(bank: dict) -> dict[str, np.ndarray]:
    stacks = [np.asarray(bank[fid], dtype=np.float64) for fid in ALL_FEATURE_IDS]
    widths = {s.shape[-1] for s in stacks}
    if len(widths) > 1:
        width = max(widths)
        stacks = [
            np.pad(s, [(0, 0)] * (s.ndim - 1) + [(0, width - s.shape[-1])])
            for s in stacks
        ]
    cube = np.stack(stacks)
    return {
        "Add": cube.mean(axis=0),
        "Max": cube.max(axis=0),
        "Min": cube.min(axis=0),
        "Mul": np.prod(cube, axis=0),
        "Concatenation": np.concatenate(stacks, axis=-1),
    }


def fixed_fusion_baselines(
    train: StackedSplit,
    validation: StackedSplit,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> dict[str, dict]:
    """Six-metric reports for the five manual fusion strategies."""
    fused_train = _fused_baselines(train.bank)
    fused_val = _fused_baselines(validation.bank)
    out = {}
    for name in ("Add", "Max", "Min", "Mul", "Concatenation"):
        x = fused_train[name][train.mask]
        y = np.zeros((len(x), 8))
        y[np.arange(len(x)), train.labels[train.mask].astype(np.int64)] = 1.0
        clf = ridge_fit(x, y, ridge_lambda)
        fv = fused_val[name]
        preds = [predict(clf, fv[i]) for i in range(fv.shape[0])]
        out[name] = metric_report(
            preds, list(validation.labels), list(validation.mask)
        )
    return out


def single_terminal_baselines(
    train: StackedSplit,
    validation: StackedSplit,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> dict[str, float]:
    """Validation Q8 of each `(Root1 F_i)` program, the weakest baseline."""
    from .fitness import evaluate_program
    from .program import function_node, terminal_node

    out = {}
    for fid in ALL_FEATURE_IDS:
        program = Program(function_node("Root1", (), [terminal_node(fid)]))
        pair = evaluate_program(program, train, validation, ridge_lambda)
        out[fid.name] = pair.q_a
    return out
