"""Append-only JSONL cache of backend outputs keyed by (backend, sample, section).

Each completed section is appended as one line and flushed, so an interrupted
run loses at most the section in flight. ``compact`` rewrites the file as one
merged record per (backend_id, sample_id) in sorted order, which makes the
final file independent of completion order.
"""
from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Optional

from .prompts import TEMPLATE_VERSION

log = logging.getLogger(__name__)


class FeatureCache:
    def __init__(self, path=None, template_version: str = TEMPLATE_VERSION):
        self.path = Path(path) if path is not None else None
        self.template_version = template_version
        self._data: dict = {}
        self._lock = threading.Lock()
        self.stale = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # torn final write from an interrupted run
                    log.warning("%s:%d: skipping unreadable cache line", self.path, lineno)
                    continue
                if rec.get("template_version") != self.template_version:
                    self.stale += 1
                    continue
                key = (rec["backend_id"], rec["sample_id"])
                self._data.setdefault(key, {}).update(rec["sections"])

    def get(self, backend_id: str, sample_id: str, section: str) -> Optional[dict]:
        with self._lock:
            return self._data.get((backend_id, sample_id), {}).get(section)

    def has(self, backend_id: str, sample_id: str, section: str) -> bool:
        return self.get(backend_id, sample_id, section) is not None

    def put(self, backend_id: str, sample_id: str, section: str, record: dict) -> None:
        line = json.dumps(
            {
                "backend_id": backend_id,
                "sample_id": sample_id,
                "template_version": self.template_version,
                "sections": {section: record},
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        with self._lock:
            self._data.setdefault((backend_id, sample_id), {})[section] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()

    def sections(self, backend_id: str, sample_id: str) -> dict:
        with self._lock:
            return dict(self._data.get((backend_id, sample_id), {}))

    def keys(self):
        with self._lock:
            return sorted(self._data)

    def compact(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with self._lock:
            with open(tmp, "w", encoding="utf-8") as fh:
                for key in sorted(self._data):
                    rec = {
                        "backend_id": key[0],
                        "sample_id": key[1],
                        "template_version": self.template_version,
                        "sections": self._data[key],
                    }
                    fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            os.replace(tmp, self.path)
