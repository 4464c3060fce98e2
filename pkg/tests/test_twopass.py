"""The coarse-then-expert pipeline: training, routing, and the report."""

import numpy as np
import pytest

from digitpass.datasets import LabeledImage, synth_digits
from digitpass.errors import EmptyDatasetError
from digitpass.evolution import Chromosome, GaConfig
from digitpass.neuralnet import MlpModel, Topology, init_model
from digitpass.raster import BinaryImage, GrayImage
from digitpass.twopass import (
    Decision,
    GroupExpert,
    PipelineConfig,
    PipelineModel,
    classify,
    evaluate,
    group_key,
    prepare_images,
    stratified_indices,
    train_pipeline,
)

# Small everywhere: these tests exercise plumbing, not accuracy.
TINY = PipelineConfig(
    seed=0,
    coarse_hidden=12,
    coarse_epochs=8,
    expert_epochs=8,
    tau=1,
    ga=GaConfig(max_generations=1, fitness_epochs=2, hidden_units=6),
)


def blank_sample(label=0):
    return LabeledImage(BinaryImage(np.zeros((8, 8), dtype=np.uint8)), label, "blank")


def test_group_key_sorts_labels():
    assert group_key((9, 1)) == "1-9"
    assert group_key([0, 3, 4, 5, 6]) == "0-3-4-5-6"


def test_prepare_images_counts_blanks_and_keeps_labels_aligned():
    data = synth_digits(per_class=2, seed=1, noise=0.0)
    data.insert(3, blank_sample(label=7))
    images, labels, skipped = prepare_images(data)
    assert skipped == 1
    assert len(images) == len(labels) == 20
    assert 7 not in labels[:4] or labels.tolist().count(7) == 2


def test_prepare_images_binarizes_gray_and_inverts():
    px = np.full((8, 8), 255, dtype=np.uint8)
    px[2:6, 2:6] = 10  # dark square = ink
    gray = [LabeledImage(GrayImage(px), 0, "g")]
    images, _, skipped = prepare_images(gray, threshold=128)
    assert skipped == 0 and images[0].bits.shape == (32, 32)
    # Inverting turns the light background into the ink.
    inv, _, _ = prepare_images(gray, threshold=128, invert_ink=True)
    assert not np.array_equal(images[0].bits, inv[0].bits)


def test_stratified_indices_partition_per_class():
    labels = np.array([0] * 10 + [1] * 5)
    fit, val = stratified_indices(labels, 0.8, seed=3)
    assert sorted(np.concatenate([fit, val]).tolist()) == list(range(15))
    assert np.sum(labels[fit] == 0) == 8 and np.sum(labels[fit] == 1) == 4


def test_clean_data_trains_perfect_coarse_with_no_groups():
    data = synth_digits(per_class=6, seed=2, noise=0.0)
    pm = train_pipeline(data, PipelineConfig(seed=0, coarse_epochs=60))
    assert len(pm.group_table) == 0 and pm.experts == []
    rep = evaluate(pm, data)
    assert rep.coarse_accuracy == 1.0
    assert rep.combined_accuracy == rep.coarse_accuracy
    assert rep.groups == ()


def test_train_pipeline_rejects_degenerate_inputs():
    with pytest.raises(EmptyDatasetError):
        train_pipeline([], TINY)
    with pytest.raises(EmptyDatasetError):
        train_pipeline([blank_sample(), blank_sample(1)], TINY)
    one_class = [s for s in synth_digits(per_class=3, seed=1, noise=0.0) if s.label == 4]
    with pytest.raises(EmptyDatasetError):
        train_pipeline(one_class, TINY)


@pytest.fixture(scope="module")
def noisy_model():
    """A weak coarse net at tau=1 always confuses something, forcing groups."""
    data = synth_digits(per_class=8, seed=5, noise=0.3)
    pm = train_pipeline(data, TINY)
    assert len(pm.group_table) >= 1
    return pm, data


def test_model_structure_invariants(noisy_model):
    pm, _ = noisy_model
    assert pm.train_confusion.shape == (10, 10)
    assert int(pm.train_confusion.sum()) == 80
    for gid, expert in enumerate(pm.experts):
        key = group_key(expert.group)
        assert key in pm.ga_histories
        assert expert.chromosome.bitstring == pm.ga_histories[key].latest.best_bitstring
        for lab in expert.group:
            assert pm.group_table.group_of(lab) == gid


def test_classify_routes_by_coarse_group_membership(noisy_model):
    pm, data = noisy_model
    images, _, _ = prepare_images(data[:40])
    grouped_labels = {l for g in pm.group_table.groups for l in g}
    for img in images:
        d = classify(pm, img)
        if d.coarse_label in grouped_labels:
            assert d.group_id == pm.group_table.group_of(d.coarse_label)
            assert d.route == f"refined({d.group_id})"
            assert d.label in pm.experts[d.group_id].group
        else:
            assert d.group_id is None and d.route == "coarse-final"
            assert d.label == d.coarse_label


def test_evaluate_report_double_entry(noisy_model):
    pm, data = noisy_model
    rep = evaluate(pm, data)
    assert rep.total == 80 and rep.skipped_blank == 0
    assert rep.rejection_rate == 0.0
    assert rep.improvement == pytest.approx(rep.combined_accuracy - rep.coarse_accuracy)
    cm = rep.combined_confusion
    assert int(cm.sum()) == rep.total
    assert np.trace(cm) / cm.sum() == pytest.approx(rep.combined_accuracy)
    # Every sample lands in exactly one route's confusion matrix.
    stacked = sum(rep.route_confusions.values())
    assert np.array_equal(stacked, cm)
    assert set(rep.route_confusions) == {"coarse-final"} | {
        f"refined({gid})" for gid in range(len(pm.experts))
    }
    for gr in rep.groups:
        assert gr.routed_count == int(rep.route_confusions[
            f"refined({pm.group_table.group_of(gr.group[0])})"
        ].sum())


def test_evaluate_matches_classify_sample_by_sample(noisy_model):
    pm, data = noisy_model
    subset = data[:25]
    rep = evaluate(pm, subset)
    images, labels, _ = prepare_images(subset)
    hits = sum(classify(pm, img).label == lab for img, lab in zip(images, labels))
    assert rep.combined_accuracy == pytest.approx(hits / len(images))


def test_evaluate_counts_blank_test_samples(noisy_model):
    pm, data = noisy_model
    rep = evaluate(pm, data[:10] + [blank_sample()])
    assert rep.skipped_blank == 1 and rep.total == 10
    with pytest.raises(EmptyDatasetError):
        evaluate(pm, [blank_sample()])
    with pytest.raises(EmptyDatasetError):
        evaluate(pm, [])


def test_train_pipeline_is_deterministic():
    data = synth_digits(per_class=6, seed=9, noise=0.3)
    a = train_pipeline(data, TINY)
    b = train_pipeline(data, TINY)
    assert np.array_equal(a.train_confusion, b.train_confusion)
    assert len(a.experts) == len(b.experts)
    for ea, eb in zip(a.experts, b.experts):
        assert ea.chromosome.bitstring == eb.chromosome.bitstring
        assert np.array_equal(ea.model.hidden_weights, eb.model.hidden_weights)
        assert np.array_equal(ea.model.output_weights, eb.model.output_weights)


def test_group_expert_validates_width_and_size():
    ch = Chromosome.from_bitstring("100000000")  # 24 + 4 = 28 inputs
    good = init_model(Topology(28, 4), seed=0)
    GroupExpert((1, 9), ch, good)
    with pytest.raises(ValueError):
        GroupExpert((1,), ch, good)
    with pytest.raises(ValueError):
        GroupExpert((1, 9), ch, init_model(Topology(24, 4), seed=0))


def test_pipeline_model_validates_shape(noisy_model):
    pm, _ = noisy_model
    with pytest.raises(ValueError):
        PipelineModel(
            coarse=init_model(Topology(10, 4), seed=0),
            group_table=pm.group_table,
            experts=pm.experts,
            config=pm.config,
        )
    with pytest.raises(ValueError):
        PipelineModel(
            coarse=pm.coarse,
            group_table=pm.group_table,
            experts=[],
            config=pm.config,
        )
