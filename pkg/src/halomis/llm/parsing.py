"""Locate and parse the structured (JSON) object inside free-form model output."""
from __future__ import annotations

import json
import re

from ..errors import MalformedBlock, NoStructuredBlock

_DECODER = json.JSONDecoder()
_TRAILING_COMMA = re.compile(r",\s*([}\]])")
# bound the work done on pathological input
_MAX_STARTS = 256


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8", errors="replace"))


def _try_decode(text: str, pos: int):
    try:
        obj, _ = _DECODER.raw_decode(text, pos)
        return obj
    except (json.JSONDecodeError, RecursionError, ValueError):
        pass
    # tolerate trailing commas, a common model slip
    end = text.rfind("}")
    if end <= pos:
        return None
    candidate = _TRAILING_COMMA.sub(r"\1", text[pos : end + 1])
    try:
        obj, _ = _DECODER.raw_decode(candidate)
        return obj
    except (json.JSONDecodeError, RecursionError, ValueError):
        return None


def extract_structured_block(text) -> dict:
    """Return the first well-formed JSON object found in ``text``.

    Leading prose and markdown code fences are skipped. Raises
    ``NoStructuredBlock`` when there is no ``{`` at all and ``MalformedBlock``
    (carrying the byte offset of the first candidate) when no candidate parses.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    elif not isinstance(text, str):
        text = str(text)
    starts = [m.start() for m in re.finditer(r"\{", text)]
    if not starts:
        raise NoStructuredBlock("no structured object in model output")
    for pos in starts[:_MAX_STARTS]:
        obj = _try_decode(text, pos)
        if isinstance(obj, dict):
            return obj
    raise MalformedBlock("no well-formed structured object", offset=_byte_offset(text, starts[0]))
