"""Coercion of model-reported scores into bounded numbers."""
from __future__ import annotations

import math
import re

_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def coerce_number(value) -> float:
    """Turn ``7``, ``7.0``, ``"7"`` or ``"7/10"`` into a float; raise ValueError otherwise."""
    if isinstance(value, bool):
        raise ValueError(f"not a score: {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _NUMBER.search(value)
        if not m:
            raise ValueError(f"not a score: {value!r}")
        out = float(m.group())
    elif isinstance(value, dict) and "score" in value:
        return coerce_number(value["score"])
    else:
        raise ValueError(f"not a score: {value!r}")
    if not math.isfinite(out):
        raise ValueError(f"not a finite score: {value!r}")
    return out


def clamp_score(value, lo=1, hi=10, integer=True):
    """Return ``(score, was_clamped)`` with the score forced into ``[lo, hi]``."""
    x = coerce_number(value)
    if integer:
        x = int(round(x))
    clamped = x < lo or x > hi
    x = min(max(x, lo), hi)
    return x, clamped
