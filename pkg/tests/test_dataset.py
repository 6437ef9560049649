import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halomis.dataset import (
    Dataset,
    balance_indices,
    balance_training_split,
    compute_stats,
    load_csv,
    load_jsonl,
    stratified_fold_indices,
    stratified_folds,
)
from halomis.errors import DegenerateClass, DuplicateId, EmptyDataset, EmptyText, InvalidLabel, MissingField, NoPositives, TooFewSamples

from conftest import make_sample


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def test_load_three_valid_lines(tmp_path):
    p = tmp_path / "d.jsonl"
    _write_jsonl(p, [{"id": str(i), "prompt": "q", "response": "a", "label_hallucination": i % 2} for i in range(3)])
    ds = load_jsonl(p)
    assert len(ds) == 3
    assert ds.issues == []
    assert ds["1"].label_hallucination == 1


def test_invalid_label_reported_other_lines_loaded(tmp_path):
    p = tmp_path / "d.jsonl"
    _write_jsonl(p, [
        {"id": "a", "prompt": "q", "response": "r", "label_hallucination": 0},
        {"id": "b", "prompt": "q", "response": "r", "label_hallucination": 2},
        {"id": "c", "prompt": "q", "response": "r"},
    ])
    ds = load_jsonl(p)
    assert ds.ids == ["a", "c"]
    assert len(ds.issues) == 1
    assert isinstance(ds.issues[0], InvalidLabel)
    assert ds.issues[0].line == 2


@pytest.mark.parametrize("record,error", [
    ({"id": "x", "prompt": "q"}, MissingField),
    ({"id": "x", "prompt": "  ", "response": "r"}, EmptyText),
])
def test_record_errors_name_the_line(tmp_path, record, error):
    p = tmp_path / "d.jsonl"
    _write_jsonl(p, [{"id": "ok", "prompt": "q", "response": "r"}, record])
    ds = load_jsonl(p)
    assert [type(e) for e in ds.issues] == [error]
    assert ds.issues[0].line == 2


def test_duplicate_id(tmp_path):
    p = tmp_path / "d.jsonl"
    _write_jsonl(p, [{"id": "x", "prompt": "q", "response": "r"}] * 2)
    ds = load_jsonl(p)
    assert len(ds) == 1
    assert isinstance(ds.issues[0], DuplicateId)


def test_kaggle_table_counts(tmp_path):
    # a converted file with the published Kaggle class counts
    rows = ["question,answer,halluc,omit"]
    for i in range(994):
        rows.append(f"q{i},a{i},{int(i < 243)},{int(i % 994 >= 994 - 511)}")
    p = tmp_path / "kaggle.csv"
    p.write_text("\n".join(rows) + "\n", encoding="utf-8")
    mapping = {"prompt": "question", "response": "answer", "label_hallucination": "halluc",
               "label_omission": "omit"}
    stats = compute_stats(load_csv(p, mapping))
    assert (stats.n_total, stats.n_pos_hal, stats.n_pos_omis) == (994, 243, 511)


def test_custom_hallucination_rate():
    ds = Dataset([make_sample(i, hal=int(i < 87)) for i in range(4418)])
    stats = compute_stats(ds)
    assert stats.n_pos_hal == 87
    assert round(stats.pos_rate_hal, 4) == 0.0197
    assert "0.0197" in stats.format()


def test_stats_edge_cases():
    assert compute_stats(Dataset([make_sample(i) for i in range(4)])).pos_rate_hal == 0.0
    assert compute_stats(Dataset([make_sample(i, hal=i % 2) for i in range(10)])).pos_rate_hal == 0.5
    with pytest.raises(EmptyDataset):
        compute_stats(Dataset([]))


def test_folds_100_samples_10_pos():
    ds = Dataset([make_sample(i, hal=int(i % 10 == 0)) for i in range(100)])
    folds = stratified_folds(ds, 5, "hal", 42)
    assert [int(ds.labels(f.test_ids, "hal").sum()) for f in folds] == [2] * 5
    assert folds == stratified_folds(ds, 5, "hal", 42)


def test_folds_k2_four_samples():
    ds = Dataset([make_sample(i, hal=int(i < 2)) for i in range(4)])
    for f in stratified_folds(ds, 2, "hal", 0):
        assert ds.labels(f.test_ids, "hal").sum() == 1


def test_fold_errors():
    with pytest.raises(NoPositives):
        stratified_folds(Dataset([make_sample(i) for i in range(10)]), 5, "hal", 0)
    with pytest.raises(TooFewSamples):
        stratified_folds(Dataset([make_sample(0, hal=1)]), 2, "hal", 0)


def test_unlabeled_excluded_from_folds():
    samples = [make_sample(i, hal=int(i < 3)) for i in range(10)]
    samples.append(make_sample(99, hal=None))
    ds = Dataset(samples)
    covered = [i for f in stratified_folds(ds, 2, "hal", 0) for i in f.test_ids]
    assert "s0099" not in covered and len(covered) == 10


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=6, max_size=120), st.integers(2, 6), st.integers(0, 10_000))
def test_fold_partition_property(labels, k, seed):
    labels[0] = 1
    ds = Dataset([make_sample(i, hal=v) for i, v in enumerate(labels)])
    if len(ds) < k:
        return
    folds = stratified_folds(ds, k, "hal", seed)
    tests = [i for f in folds for i in f.test_ids]
    assert sorted(tests) == sorted(ds.ids)
    n_pos = sum(labels)
    for f in folds:
        assert not set(f.train_ids) & set(f.test_ids)
        assert abs(ds.labels(f.test_ids, "hal").sum() - n_pos / k) <= 1


def test_balance_97_3():
    ds = Dataset([make_sample(i, hal=int(i < 3)) for i in range(100)])
    out = balance_training_split(ds, ds.ids, "hal", 42)
    y = ds.labels(out, "hal")
    assert len(out) == 6 and y.sum() == 3
    assert out == balance_training_split(ds, ds.ids, "hal", 42)


def test_balance_identity_cases():
    y = np.array([1, 0, 1, 0])
    assert balance_indices(y, 0).tolist() == [0, 1, 2, 3]
    assert balance_indices(np.array([0, 1]), 5).tolist() == [0, 1]
    with pytest.raises(DegenerateClass):
        balance_indices(np.array([1, 1]), 0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=200), st.integers(0, 10_000))
def test_balance_property(labels, seed):
    y = np.array(labels)
    if y.min() == y.max():
        return
    idx = balance_indices(y, seed)
    assert y[idx].sum() * 2 == len(idx)
    assert len(set(idx.tolist())) == len(idx)
    # the minority class is kept whole
    minority = 1 if y.sum() <= len(y) - y.sum() else 0
    assert set(np.flatnonzero(y == minority)) <= set(idx.tolist())


def test_fold_indices_deterministic():
    y = np.array([1, 0] * 20)
    assert np.array_equal(stratified_fold_indices(y, 3, 1), stratified_fold_indices(y, 3, 1))


def test_roundtrip_jsonl(tmp_path, small_dataset):
    p = tmp_path / "out.jsonl"
    small_dataset.write_jsonl(p)
    again = load_jsonl(p)
    assert [s.to_record() for s in again] == [s.to_record() for s in small_dataset]
