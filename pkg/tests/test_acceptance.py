"""Acceptance suite: ten numbered behavioral criteria.

Each test prints one PASS/FAIL verdict line; conftest echoes the collected
lines after the run. Criteria 8 and 9 are full-scale training runs and
dominate the suite's wall-clock time.
"""

import shutil
import struct
import time
from contextlib import contextmanager

import numpy as np
import pytest

import conftest
from test_featurizer import _runs_oracle
from test_grouping import REFERENCE_CM
from test_neuralnet import _fd_gradients, _step_gradients

from digitpass.cli import entrypoint
from digitpass.datasets import SplitSpec, load_idx, split, synth_digits
from digitpass.errors import BadMagicError, CountMismatchError
from digitpass.evolution import (
    Chromosome,
    GaConfig,
    GaHistory,
    GenerationRecord,
    crossover,
    mutate,
    random_population,
    roulette_select,
    run_ga,
    should_stop,
)
from digitpass.featurizer import (
    assemble_features,
    longest_run_window,
    shadow_features,
    window_table,
)
from digitpass.grouping import form_groups
from digitpass.neuralnet import Topology, init_model
from digitpass.raster import BinaryImage
from digitpass.seeds import derive_seed
from digitpass.twopass import PipelineConfig, evaluate, train_pipeline


def record(line):
    print(line)
    conftest.criterion_lines.append(line)


@contextmanager
def criterion(n, label):
    try:
        yield
    except BaseException:
        record(f"FAIL criterion {n}: {label}")
        raise
    record(f"PASS criterion {n}: {label}")


def best_of(fn, repeats=5):
    """Steady-state runtime: minimum over repeats after one warmup call."""
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def test_criterion_01_group_formation():
    with criterion(1, "confusion groups at tau=5 and tau=11"):
        five = form_groups(REFERENCE_CM, 5)
        eleven = form_groups(REFERENCE_CM, 11)
        assert {frozenset(g) for g in five.groups} == {
            frozenset({1, 9}), frozenset({0, 3, 4, 5, 6})
        }
        assert {frozenset(g) for g in eleven.groups} == {frozenset({1, 9})}
        elapsed = best_of(lambda: (form_groups(REFERENCE_CM, 5),
                                   form_groups(REFERENCE_CM, 11)))
        assert elapsed < 1e-3, f"{elapsed:.6f}s"


def test_criterion_02_feature_widths():
    with criterion(2, "3-window and 2-window chromosomes give widths 36 and 32"):
        three = Chromosome.from_bitstring("010101000")
        two = Chromosome.from_bitstring("000011000")
        assert three.feature_width() == 36
        assert two.feature_width() == 32
        rng = np.random.default_rng(7)
        img = BinaryImage((rng.random((32, 32)) < 0.4).astype(np.uint8))
        assert len(assemble_features(img, three.bits)) == 36
        assert len(assemble_features(img, two.bits)) == 32
        elapsed = best_of(lambda: (assemble_features(img, three.bits),
                                   assemble_features(img, two.bits)))
        assert elapsed < 1e-3, f"{elapsed:.6f}s"


def test_criterion_03_longest_run_oracle():
    with criterion(3, "longest-run features match a naive scanner on 1000 images"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2025)
        wins = window_table()
        for _ in range(1000):
            density = rng.uniform(0.05, 0.95)
            bits = (rng.random((32, 32)) < density).astype(np.uint8)
            img = BinaryImage(bits)
            for win in wins:
                got = longest_run_window(img, win)
                want = _runs_oracle(bits, win)
                assert np.array_equal(got, want)
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"{elapsed:.1f}s"


def test_criterion_04_shadow_bounds_and_monotonicity():
    with criterion(4, "shadow features bounded in [0,1] and pixel-monotone"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(404)
        for _ in range(1000):
            density = rng.uniform(0.0, 1.0)
            img = BinaryImage((rng.random((32, 32)) < density).astype(np.uint8))
            f = shadow_features(img)
            assert f.shape == (24,)
            assert np.all(f >= 0.0) and np.all(f <= 1.0)
        for _ in range(100):
            bits = np.zeros((32, 32), dtype=np.uint8)
            order = rng.permutation(32 * 32)[:60]
            prev = shadow_features(BinaryImage(bits))
            for pos in order:
                bits[pos // 32, pos % 32] = 1
                cur = shadow_features(BinaryImage(bits))
                assert np.all(cur >= prev - 1e-12)
                prev = cur
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"{elapsed:.1f}s"


def test_criterion_05_gradient_check():
    with criterion(5, "backprop matches central differences on 100 pairs"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(55)
        worst = 0.0
        for k in range(100):
            inputs = int(rng.integers(3, 13))
            hidden = int(rng.integers(2, 9))
            m = init_model(Topology(inputs, hidden), seed=int(rng.integers(1 << 30)))
            x = rng.uniform(0.0, 1.0, size=inputs)
            y = int(rng.integers(0, 10))
            analytic = _step_gradients(m, x, y)
            fd = _fd_gradients(m, x, y, eps=1e-4)
            num = np.sqrt(sum(float(np.sum((fd[p] - analytic[p]) ** 2)) for p in fd))
            den = max(np.sqrt(sum(float(np.sum(fd[p] ** 2)) for p in fd)), 1e-12)
            worst = max(worst, num / den)
        assert worst < 1e-4, f"max relative error {worst:.2e}"
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"{elapsed:.1f}s"


def test_criterion_06_ga_mechanics():
    with criterion(6, "GA population, conservation, mutation, and stop rules"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(66)

        # Population size 20 across select / crossover / mutate boundaries,
        # and in every recorded generation of a real run.
        pop = random_population(rng)
        assert len(pop) == 20
        fits = list(rng.random(20))
        assert len(roulette_select(pop, fits, rng)) == 20
        assert len(crossover(pop, rng)) == 20
        assert len(mutate(pop, rng)) == 20
        _, _, history = run_ga(
            (1, 9), None, None, GaConfig(seed=11),
            fitness_fn=lambda ch: ch.popcount / 9,
        )
        assert all(len(rec.bitstrings) == 20 for rec in history.records)

        # Crossover conserves each bit position's column sum; 125 calls of
        # 8 pairs each cover 1000 pairs.
        pairs = 0
        for _ in range(125):
            pop = random_population(rng)
            before = np.array([c.bits for c in pop])
            after = np.array([c.bits for c in crossover(pop, rng)])
            assert np.array_equal(before.sum(axis=0), after.sum(axis=0))
            pairs += int(20 * 0.8) // 2
        assert pairs == 1000

        # Mutation moves exactly int(round(20*0.5)) members a Hamming
        # distance of exactly 1 and leaves the rest untouched.
        for _ in range(50):
            pop = random_population(rng)
            mutated = mutate(pop, rng)
            dists = sorted(
                int(np.sum(a.bits != b.bits)) for a, b in zip(pop, mutated)
            )
            assert dists == [0] * 10 + [1] * 10

        # Stopping: generation budget, and the 0.98 mean/best equality case.
        cfg = GaConfig(seed=0)

        def rec(gen, fits, best):
            return GenerationRecord(
                generation=gen,
                bitstrings=tuple("000000000" for _ in fits),
                fitnesses=tuple(fits),
                best_fitness=best,
                best_bitstring="000000000",
            )

        at_budget = GaHistory()
        at_budget.append(rec(20, [0.0] * 20, best=0.5))
        assert should_stop(at_budget, cfg)
        under_budget = GaHistory()
        under_budget.append(rec(19, [0.0] * 20, best=0.5))
        assert not should_stop(under_budget, cfg)
        at_ratio = GaHistory()
        at_ratio.append(rec(3, [0.882] * 20, best=0.90))
        assert should_stop(at_ratio, cfg)  # 0.882 == 0.98 * 0.90 exactly
        below_ratio = GaHistory()
        below_ratio.append(rec(3, [0.8819] * 20, best=0.90))
        assert not should_stop(below_ratio, cfg)

        # Zero total fitness falls back to a uniform draw.
        pop = random_population(np.random.default_rng(3))
        draw_rng = np.random.default_rng(4)
        counts = np.zeros(20, dtype=int)
        index = {id(c): i for i, c in enumerate(pop)}
        for _ in range(100):
            for chosen in roulette_select(pop, [0.0] * 20, draw_rng):
                counts[index[id(chosen)]] += 1
        assert np.all(counts > 0)
        assert counts.min() > 40 and counts.max() < 200  # expected 100 each

        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"{elapsed:.1f}s"


def test_criterion_07_onemax():
    with criterion(7, "onemax reaches 111111111 within 20 generations in >=95/100 seeds"):
        t0 = time.perf_counter()
        hits = 0
        for seed in range(100):
            best, _, history = run_ga(
                (1, 9), None, None,
                GaConfig(seed=seed),
                fitness_fn=lambda ch: ch.popcount / 9,
            )
            if best.bitstring == "111111111":
                assert history.latest.generation <= 20
                hits += 1
        assert hits >= 95, f"{hits}/100"
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"{elapsed:.1f}s"


def synthetic_run(seed):
    data = synth_digits(per_class=200, seed=derive_seed(seed, "synth-data"), noise=0.08)
    train_set, test_set = split(data, SplitSpec(train_fraction=2 / 3,
                                                seed=derive_seed(seed, "split")))
    cfg = PipelineConfig(seed=seed, ga=GaConfig(fitness_epochs=12, hidden_units=40))
    t0 = time.perf_counter()
    pm = train_pipeline(train_set, cfg)
    rep = evaluate(pm, test_set)
    return rep, time.perf_counter() - t0


def test_criterion_08_end_to_end_synthetic():
    with criterion(8, "full pipeline on 2000 synthetic digits: no degradation, expert win"):
        groups_formed = False
        expert_win = False
        for seed in (0, 1, 2):
            rep, elapsed = synthetic_run(seed)
            print(f"  seed {seed}: coarse {rep.coarse_accuracy:.2%} "
                  f"combined {rep.combined_accuracy:.2%} "
                  f"({rep.improvement:+.2%}) in {elapsed:.0f}s")
            assert elapsed < 600.0, f"seed {seed}: {elapsed:.0f}s"
            assert rep.improvement >= -0.005, f"seed {seed} degraded {rep.improvement:+.2%}"
            if rep.groups:
                groups_formed = True
            expert_win = expert_win or any(
                g.routed_accuracy is not None
                and g.coarse_accuracy_on_routed is not None
                and g.routed_accuracy > g.coarse_accuracy_on_routed
                for g in rep.groups
            )
        if groups_formed:
            assert expert_win, "no expert beat the coarse pass on its routed samples"


def test_criterion_09_byte_identical_reruns(tmp_path):
    with criterion(9, "identical train invocations write byte-identical artifacts"):
        out = tmp_path / "run"
        argv = [
            "train", "--seed", "0", "--out", str(out),
            "--set", "ga.fitness_epochs=12", "--set", "ga.hidden_units=40",
        ]
        assert entrypoint(list(argv)) == 0
        stash = tmp_path / "first"
        shutil.copytree(out, stash)
        assert entrypoint(list(argv)) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == sorted(p.name for p in stash.iterdir())
        assert "model.json" in names and "report.csv" in names
        for name in names:
            assert (out / name).read_bytes() == (stash / name).read_bytes(), name


def test_criterion_10_idx_round_trip(tmp_path):
    with criterion(10, "IDX fixtures parse exactly; malformed files raise typed errors"):
        t0 = time.perf_counter()
        pixels = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
        img_path = tmp_path / "images.idx"
        lbl_path = tmp_path / "labels.idx"
        img_path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 3) + pixels.tobytes())
        lbl_path.write_bytes(struct.pack(">II", 0x00000801, 2) + bytes([4, 9]))
        samples = load_idx(img_path, lbl_path)
        assert [s.label for s in samples] == [4, 9]
        assert np.array_equal(samples[0].image.pixels, pixels[0])
        assert np.array_equal(samples[1].image.pixels, pixels[1])

        bad_magic = tmp_path / "bad.idx"
        bad_magic.write_bytes(struct.pack(">IIII", 0x00000804, 2, 2, 3) + pixels.tobytes())
        with pytest.raises(BadMagicError):
            load_idx(bad_magic, lbl_path)

        short_labels = tmp_path / "short.idx"
        short_labels.write_bytes(struct.pack(">II", 0x00000801, 1) + bytes([4]))
        with pytest.raises(CountMismatchError):
            load_idx(img_path, short_labels)
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0, f"{elapsed:.2f}s"
