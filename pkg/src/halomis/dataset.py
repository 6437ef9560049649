"""Labeled prompt/response corpora: loading, validation, statistics and splits."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import (
    DegenerateClass,
    DuplicateId,
    EmptyDataset,
    EmptyText,
    InvalidLabel,
    MissingField,
    NoPositives,
    RecordError,
    TooFewSamples,
)

TASKS = ("hal", "omis")
SOURCES = ("custom", "kaggle", "synthetic")
_LABEL_FIELD = {"hal": "label_hallucination", "omis": "label_omission"}


@dataclass(frozen=True)
class AnnotatedSample:
    id: str
    prompt: str
    response: str
    label_hallucination: Optional[int] = None
    label_omission: Optional[int] = None
    source: str = "custom"

    def label(self, task: str) -> Optional[int]:
        return getattr(self, label_field(task))

    def to_record(self) -> dict:
        rec = asdict(self)
        return {k: v for k, v in rec.items() if v is not None}


@dataclass(frozen=True)
class DatasetStats:
    n_total: int
    n_pos_hal: int
    n_pos_omis: int
    pos_rate_hal: float
    pos_rate_omis: float

    def format(self, dp: int = 4) -> str:
        return (
            f"n_total={self.n_total} "
            f"hal: {self.n_pos_hal} positive ({self.pos_rate_hal:.{dp}f}) "
            f"omis: {self.n_pos_omis} positive ({self.pos_rate_omis:.{dp}f})"
        )


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: list
    test_ids: list


@dataclass
class Dataset:
    """Ordered collection of samples with unique ids.

    ``issues`` holds per-line validation errors collected while loading;
    the offending lines are skipped, everything else is kept.
    """

    samples: list
    issues: list = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {}
        for s in self.samples:
            if s.id in self._by_id:
                raise DuplicateId(f"duplicate id {s.id!r}")
            self._by_id[s.id] = s

    def __len__(self):
        return len(self.samples)

    def __iter__(self) -> Iterator[AnnotatedSample]:
        return iter(self.samples)

    def __getitem__(self, sample_id: str) -> AnnotatedSample:
        return self._by_id[sample_id]

    def __contains__(self, sample_id) -> bool:
        return sample_id in self._by_id

    @property
    def ids(self) -> list:
        return [s.id for s in self.samples]

    def labeled(self, task: str) -> list:
        return [s for s in self.samples if s.label(task) is not None]

    def labels(self, ids: Iterable[str], task: str) -> np.ndarray:
        return np.array([self._by_id[i].label(task) for i in ids], dtype=int)

    def subset(self, ids: Iterable[str]) -> "Dataset":
        return Dataset([self._by_id[i] for i in ids])

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.samples:
                fh.write(json.dumps(s.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def label_field(task: str) -> str:
    try:
        return _LABEL_FIELD[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}") from None


def _parse_label(value, name, line):
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise InvalidLabel(f"{name} must be 0 or 1, got {value!r}", line)
    if isinstance(value, str):
        value = value.strip()
        if value not in ("0", "1"):
            raise InvalidLabel(f"{name} must be 0 or 1, got {value!r}", line)
        return int(value)
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if value not in (0, 1) or not isinstance(value, int):
        raise InvalidLabel(f"{name} must be 0 or 1, got {value!r}", line)
    return int(value)


def sample_from_record(rec: dict, line=None, default_source="custom") -> AnnotatedSample:
    if not isinstance(rec, dict):
        raise MissingField("record is not an object", line)
    for name in ("id", "prompt", "response"):
        if name not in rec or rec[name] is None:
            raise MissingField(f"missing field {name!r}", line)
    prompt, response = str(rec["prompt"]), str(rec["response"])
    if not prompt.strip():
        raise EmptyText("prompt is empty", line)
    if not response.strip():
        raise EmptyText("response is empty", line)
    source = rec.get("source") or default_source
    if source not in SOURCES:
        raise RecordError(f"unknown source {source!r}", line)
    return AnnotatedSample(
        id=str(rec["id"]),
        prompt=prompt,
        response=response,
        label_hallucination=_parse_label(rec.get("label_hallucination"), "label_hallucination", line),
        label_omission=_parse_label(rec.get("label_omission"), "label_omission", line),
        source=source,
    )


def _collect(records, default_source="custom") -> Dataset:
    samples, issues, seen = [], [], set()
    for line, rec in records:
        try:
            if isinstance(rec, Exception):
                raise rec
            sample = sample_from_record(rec, line, default_source)
            if sample.id in seen:
                raise DuplicateId(f"duplicate id {sample.id!r}", line)
        except RecordError as exc:
            issues.append(exc)
            continue
        seen.add(sample.id)
        samples.append(sample)
    return Dataset(samples, issues)


def load_jsonl(path) -> Dataset:
    """Load a canonical JSONL corpus; invalid lines are recorded in ``issues``."""

    def records():
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    yield lineno, json.loads(raw)
                except json.JSONDecodeError as exc:
                    yield lineno, MissingField(f"not valid JSON ({exc.msg})", lineno)

    return _collect(records())


def load_csv(path, mapping: dict, source="kaggle") -> Dataset:
    """Convert a CSV (e.g. the public Kaggle corpus) using a column mapping.

    ``mapping`` maps canonical field names (prompt, response, and optionally
    id, label_hallucination, label_omission) to CSV column names. Rows without
    an id column get ``<source>-<row index>``.
    """
    for required in ("prompt", "response"):
        if required not in mapping:
            raise MissingField(f"column mapping lacks {required!r}")

    def records():
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            # header is line 1
            for idx, row in enumerate(reader):
                rec = {"source": source}
                for canon, column in mapping.items():
                    if column not in row:
                        yield idx + 2, MissingField(f"column {column!r} not in CSV", idx + 2)
                        break
                    rec[canon] = row[column]
                else:
                    rec.setdefault("id", f"{source}-{idx}")
                    yield idx + 2, rec

    return _collect(records(), default_source=source)


def load_mapping(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise ValueError("column mapping must be a JSON object")
    return mapping


def compute_stats(dataset: Dataset) -> DatasetStats:
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("dataset is empty")
    n_hal = sum(1 for s in dataset if s.label_hallucination == 1)
    n_omis = sum(1 for s in dataset if s.label_omission == 1)
    return DatasetStats(n, n_hal, n_omis, n_hal / n, n_omis / n)


def stratified_fold_indices(y, k: int, seed: int) -> np.ndarray:
    """Assign each position of binary ``y`` to one of ``k`` folds.

    Each class is shuffled independently and dealt round-robin; the negative
    deal starts where the positive deal stopped so fold sizes stay within one
    of each other as well.
    """
    y = np.asarray(y).astype(int)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    return folds


def stratified_folds(dataset: Dataset, k: int, task: str, seed: int) -> list:
    if k < 2:
        raise TooFewSamples(f"k must be >= 2, got {k}")
    labeled = dataset.labeled(task)
    if len(labeled) < k:
        raise TooFewSamples(f"{len(labeled)} labeled samples for task {task!r}, need >= {k}")
    ids = [s.id for s in labeled]
    y = np.array([s.label(task) for s in labeled])
    if y.sum() == 0:
        raise NoPositives(f"no positive samples for task {task!r}")
    assign = stratified_fold_indices(y, k, seed)
    splits = []
    for f in range(k):
        test = [i for i, a in zip(ids, assign) if a == f]
        train = [i for i, a in zip(ids, assign) if a != f]
        splits.append(FoldSplit(f, train, test))
    return splits


def balance_indices(y, seed: int) -> np.ndarray:
    """Positions of a 1:1 undersample of binary ``y``, in original order."""
    y = np.asarray(y).astype(int)
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateClass("both classes are required for balancing")
    rng = np.random.default_rng(seed)
    if len(neg) > len(pos):
        neg = rng.choice(neg, size=len(pos), replace=False)
    elif len(pos) > len(neg):
        pos = rng.choice(pos, size=len(neg), replace=False)
    return np.sort(np.concatenate([pos, neg]))


def balance_training_split(dataset: Dataset, ids, task: str, seed: int) -> list:
    ids = list(ids)
    keep = balance_indices(dataset.labels(ids, task), seed)
    return [ids[i] for i in keep]
