from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sapda import oracles
from sapda.data import (
    BLOBS8TO4,
    DomainSet,
    PdaTaskSpec,
    dump_csv,
    generate_task,
    load_csv,
    minibatch,
    philox,
    rotation,
    source_centers,
    target_centers,
)


def test_default_benchmark_parameters():
    s = BLOBS8TO4
    assert (s.source_classes, s.target_classes, s.samples_per_class, s.input_dim) == (8, 4, 200, 2)
    assert (s.radius, s.noise, s.rotation_deg, s.scale) == (4.0, 0.45, 30.0, 1.1)


def test_identity_shift_reuses_source_centers():
    spec = replace(BLOBS8TO4, rotation_deg=0.0, scale=1.0)
    np.testing.assert_array_equal(target_centers(spec), source_centers(spec)[:4])


def test_source_center_layout():
    c = source_centers(BLOBS8TO4)
    ang = 2 * np.pi * np.arange(8) / 8
    np.testing.assert_allclose(c, 4.0 * np.c_[np.cos(ang), np.sin(ang)], atol=1e-15)


def test_higher_dimensional_centers_pad_with_zeros():
    spec = replace(BLOBS8TO4, input_dim=4, translation=(0.5, 0.0, 1.0, -1.0))
    c = target_centers(spec)
    assert c.shape == (4, 4)
    np.testing.assert_allclose(c[:, 2:], np.tile([1.0, -1.0], (4, 1)))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-180, 180),
    st.floats(0.2, 3.0),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
)
def test_inverse_shift_recovers_source_centers(theta, scale, shift):
    spec = replace(BLOBS8TO4, rotation_deg=theta, scale=scale, translation=shift)
    back = (target_centers(spec) - np.array(shift)) @ rotation(spec) / scale
    np.testing.assert_allclose(back, source_centers(spec)[:4], atol=1e-9)


def test_nearest_centroid_separability():
    task = generate_task(BLOBS8TO4)
    src, test = task.source, task.target_test
    assert oracles.nearest_centroid_accuracy(src.inputs, src.labels, src.inputs, src.labels) > 0.99
    assert oracles.nearest_centroid_accuracy(test.inputs, test.labels, test.inputs, test.labels) > 0.99


def test_splits_and_label_hygiene():
    task = generate_task(BLOBS8TO4)
    assert task.source.inputs.shape == (1600, 2)
    assert task.target_train.labels is None
    assert len(task.target_train) == len(task.target_test) == 400
    np.testing.assert_array_equal(np.bincount(task.target_test.labels), [100] * 4)
    assert task.shared_classes == (0, 1, 2, 3)
    # train and test halves are disjoint draws
    assert not np.any(np.all(task.target_train.inputs[:, None] == task.target_test.inputs[None], -1))


def test_standard_task_keeps_every_class():
    task = generate_task(replace(BLOBS8TO4, target_classes=8))
    assert task.shared_classes == tuple(range(8))
    assert set(task.target_test.labels) == set(range(8))


def test_generation_is_deterministic():
    a, b = generate_task(BLOBS8TO4), generate_task(BLOBS8TO4)
    np.testing.assert_array_equal(a.source.inputs, b.source.inputs)
    np.testing.assert_array_equal(a.target_train.inputs, b.target_train.inputs)
    c = generate_task(replace(BLOBS8TO4, seed=1))
    assert not np.array_equal(a.source.inputs, c.source.inputs)


def test_philox_streams_are_stable():
    # generator output is part of the reproducibility contract
    assert philox(0, 0).integers(0, 2**32, size=3).tolist() == philox(0, 0).integers(
        0, 2**32, size=3
    ).tolist()
    assert philox(0, 0).random() != philox(0, 1).random()


@pytest.mark.parametrize(
    "kw",
    [
        {"target_classes": 9},
        {"target_classes": 0},
        {"noise": 0.0},
        {"samples_per_class": 0},
        {"input_dim": 1},
        {"scale": 0.0},
        {"translation": (1.0, 2.0, 3.0)},
    ],
)
def test_invalid_specs_rejected(kw):
    with pytest.raises(ValueError):
        generate_task(PdaTaskSpec(**kw))


class TestMinibatch:
    def test_balanced_full_batch(self, rng):
        task = generate_task(BLOBS8TO4)
        b = minibatch(task.source, len(task.source), rng, balanced=True)
        np.testing.assert_array_equal(np.bincount(b.labels), [200] * 8)

    def test_same_state_same_batch(self):
        task = generate_task(BLOBS8TO4)
        a = minibatch(task.source, 64, philox(5, 2), balanced=True)
        b = minibatch(task.source, 64, philox(5, 2), balanced=True)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_uniform_class_frequencies(self, rng):
        task = generate_task(BLOBS8TO4)
        counts = np.bincount(minibatch(task.source, 10_000, rng).labels, minlength=8)
        sigma = np.sqrt(10_000 * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - 1250) <= 3 * sigma)

    def test_target_batches_carry_no_labels(self, rng):
        task = generate_task(BLOBS8TO4)
        assert minibatch(task.target_train, 16, rng).labels is None

    def test_errors(self, rng):
        empty = DomainSet(np.zeros((0, 2)), np.zeros(0, dtype=int), "source")
        with pytest.raises(ValueError):
            minibatch(empty, 4, rng)
        task = generate_task(BLOBS8TO4)
        with pytest.raises(ValueError):
            minibatch(task.source, 0, rng)
        with pytest.raises(ValueError):
            minibatch(task.target_train, 4, rng, balanced=True)


def test_csv_round_trip(tmp_path):
    spec = replace(BLOBS8TO4, samples_per_class=10)
    task = generate_task(spec)
    path = tmp_path / "task.csv"
    dump_csv(task, path)
    back = load_csv(path, spec)
    np.testing.assert_array_equal(back.source.inputs, task.source.inputs)
    np.testing.assert_array_equal(back.source.labels, task.source.labels)
    np.testing.assert_array_equal(back.target_train.inputs, task.target_train.inputs)
    assert back.target_train.labels is None
    np.testing.assert_array_equal(back.target_test.labels, task.target_test.labels)
