"""Genetic search over window subsets.

Chromosomes are 9-bit strings (bit i selects window i). Fitness of a
chromosome is the recognition rate of an MLP trained on shadow features
plus the selected windows' longest-run features, with predictions
restricted to the group under optimization. The population is fixed at
20; each generation applies fitness-proportional roulette selection,
midpoint crossover on 80% of the members and a single-bit mutation on
half of them, until 20 generations have passed or the population mean
fitness reaches 98% of the best fitness seen so far.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatasetError, LabelOutsideGroupError
from .featurizer import NUM_SHADOW, NUM_WINDOWS, FeatureBank
from .neuralnet import Topology, TrainConfig, init_model, predict_batch, train
from .seeds import derive_seed

POPULATION_SIZE = 20
CROSSOVER_SPLIT = 4  # bits 0..3 kept, bits 4..8 exchanged


@dataclass(frozen=True)
class Chromosome:
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != NUM_WINDOWS or any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"chromosome must be {NUM_WINDOWS} bits of 0/1, got {self.bits!r}")

    @classmethod
    def from_bitstring(cls, s: str) -> "Chromosome":
        return cls(tuple(int(c) for c in s))

    @property
    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    def feature_width(self) -> int:
        return NUM_SHADOW + 4 * self.popcount


@dataclass(frozen=True)
class GaConfig:
    population_size: int = POPULATION_SIZE
    max_generations: int = 20
    crossover_fraction: float = 0.8
    mutation_fraction: float = 0.5
    stop_ratio: float = 0.98
    seed: int = 0
    fitness_epochs: int = 30
    hidden_units: int = 20
    learning_rate: float = 0.02
    momentum: float = 0.9

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        for name in ("crossover_fraction", "mutation_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0.0 < self.stop_ratio <= 1.0:
            raise ValueError("stop_ratio must be in (0, 1]")
        if self.fitness_epochs < 1 or self.hidden_units < 1:
            raise ValueError("fitness_epochs and hidden_units must be >= 1")


class FitnessCache:
    """Bitstring -> fitness map; a chromosome is trained at most once."""

    def __init__(self):
        self.values: dict[str, float] = {}
        self.hits = 0
        self.evaluations = 0

    def __contains__(self, key: str) -> bool:
        return key in self.values


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    bitstrings: tuple[str, ...]
    fitnesses: tuple[float, ...]
    best_fitness: float
    best_bitstring: str

    @property
    def mean_fitness(self) -> float:
        return float(np.mean(self.fitnesses))


@dataclass
class GaHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def append(self, rec: GenerationRecord):
        if self.records and rec.best_fitness < self.records[-1].best_fitness:
            raise ValueError("best-so-far fitness must be non-decreasing")
        self.records.append(rec)

    @property
    def latest(self) -> GenerationRecord:
        return self.records[-1]


def random_population(rng: np.random.Generator, size: int = POPULATION_SIZE) -> list[Chromosome]:
    """Independently uniform bits, `size` members."""
    draws = rng.integers(0, 2, size=(size, NUM_WINDOWS))
    return [Chromosome(tuple(int(b) for b in row)) for row in draws]


def _check_group_data(name: str, bank: FeatureBank, labels: np.ndarray, group) -> None:
    if len(bank) == 0:
        raise EmptyDatasetError(f"{name} data for group {sorted(group)} is empty")
    outside = set(int(v) for v in labels) - set(group)
    if outside:
        raise LabelOutsideGroupError(
            f"{name} data contains labels {sorted(outside)} outside group {sorted(group)}"
        )


def fitness(
    ch: Chromosome,
    group,
    train_data: tuple[FeatureBank, np.ndarray],
    eval_data: tuple[FeatureBank, np.ndarray],
    cfg: GaConfig,
    cache: FitnessCache,
) -> float:
    """Recognition rate on eval_data of an MLP trained on train_data with
    the chromosome's feature layout; memoized per bitstring."""
    key = ch.bitstring
    if key in cache:
        cache.hits += 1
        return cache.values[key]

    train_bank, train_labels = train_data
    eval_bank, eval_labels = eval_data
    group = sorted(set(int(g) for g in group))
    _check_group_data("train", train_bank, train_labels, group)
    _check_group_data("eval", eval_bank, eval_labels, group)

    x_train = train_bank.assemble(ch.bits)
    x_eval = eval_bank.assemble(ch.bits)
    topology = Topology(ch.feature_width(), cfg.hidden_units)
    model = init_model(topology, derive_seed(cfg.seed, "fitness-init", key))
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        epochs=cfg.fitness_epochs,
        seed=derive_seed(cfg.seed, "fitness-train", key),
    )
    model, _ = train(model, (x_train, train_labels), train_cfg)
    pred = predict_batch(model, x_eval, allowed=group)
    value = float(np.mean(pred == eval_labels))

    cache.values[key] = value
    cache.evaluations += 1
    return value


def roulette_select(pop: list[Chromosome], fitnesses, rng: np.random.Generator) -> list[Chromosome]:
    """len(pop) draws with replacement, proportional to fitness; a zero
    total falls back to uniform draws."""
    fits = np.asarray(fitnesses, dtype=np.float64)
    if fits.shape != (len(pop),) or (fits < 0).any():
        raise ValueError("fitnesses must align with the population and be non-negative")
    total = fits.sum()
    probs = fits / total if total > 0 else None
    picks = rng.choice(len(pop), size=len(pop), replace=True, p=probs)
    return [pop[int(k)] for k in picks]


def crossover(pop: list[Chromosome], rng: np.random.Generator, fraction: float = 0.8) -> list[Chromosome]:
    """Midpoint crossover on fraction of the population: distinct slots are
    drawn and paired at random; each pair swaps bits 4..8. Unchosen
    members pass through."""
    count = int(len(pop) * fraction)
    count -= count % 2
    order = rng.permutation(len(pop))
    out = list(pop)
    for k in range(0, count, 2):
        a, b = int(order[k]), int(order[k + 1])
        abits, bbits = pop[a].bits, pop[b].bits
        out[a] = Chromosome(abits[:CROSSOVER_SPLIT] + bbits[CROSSOVER_SPLIT:])
        out[b] = Chromosome(bbits[:CROSSOVER_SPLIT] + abits[CROSSOVER_SPLIT:])
    return out


def mutate(pop: list[Chromosome], rng: np.random.Generator, fraction: float = 0.5) -> list[Chromosome]:
    """Flip exactly one uniformly-chosen bit in each of fraction of the
    population, slots drawn without replacement."""
    count = int(round(len(pop) * fraction))
    slots = rng.permutation(len(pop))[:count]
    out = list(pop)
    for s in slots:
        s = int(s)
        bit = int(rng.integers(0, NUM_WINDOWS))
        bits = list(pop[s].bits)
        bits[bit] ^= 1
        out[s] = Chromosome(tuple(bits))
    return out


def should_stop(history: GaHistory, cfg: GaConfig) -> bool:
    """True after max_generations rounds, or once the current population's
    mean fitness reaches stop_ratio of the best fitness seen so far."""
    if not history.records:
        raise ValueError("history must contain at least one evaluated generation")
    rec = history.latest
    if rec.generation >= cfg.max_generations:
        return True
    return rec.mean_fitness >= cfg.stop_ratio * rec.best_fitness


def run_ga(
    group,
    train_data,
    eval_data,
    cfg: GaConfig,
    fitness_fn=None,
) -> tuple[Chromosome, float, GaHistory]:
    """Full GA loop. Returns the best-so-far chromosome (which may stem
    from any generation, the initial one included), its fitness, and the
    per-generation history. `fitness_fn(ch) -> float` replaces the MLP
    fitness when given (used by the mock-fitness smoke mode)."""
    cache = FitnessCache()
    if fitness_fn is None:
        def fitness_fn(ch):  # noqa: shadows the parameter on purpose
            return fitness(ch, group, train_data, eval_data, cfg, cache)

    rng = np.random.default_rng(derive_seed(cfg.seed, "ga-loop"))
    pop = random_population(rng, cfg.population_size)
    history = GaHistory()
    best_fit = -1.0
    best_ch = pop[0]

    generation = 0
    while True:
        fits = [float(fitness_fn(ch)) for ch in pop]
        for ch, f in zip(pop, fits):
            if f > best_fit:
                best_fit, best_ch = f, ch
        history.append(GenerationRecord(
            generation=generation,
            bitstrings=tuple(ch.bitstring for ch in pop),
            fitnesses=tuple(fits),
            best_fitness=best_fit,
            best_bitstring=best_ch.bitstring,
        ))
        if should_stop(history, cfg):
            return best_ch, best_fit, history
        pop = roulette_select(pop, fits, rng)
        pop = crossover(pop, rng, cfg.crossover_fraction)
        pop = mutate(pop, rng, cfg.mutation_fraction)
        generation += 1
