"""Prompt template registry with placeholder binding and few-shot assembly."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from ..errors import InsufficientExemplars, TemplateIntegrityError, UnboundPlaceholder

TEMPLATE_IDS = (
    "judge",
    "statement_extraction",
    "contradiction_analysis",
    "entity_extraction",
    "entity_verification",
    "claim_extraction",
    "claim_verification",
    "uncertainty",
    "sentiment_professional",
    "multi_llm_judge",
    "binary_logit",
)

REGISTRY_VERSION = "1"

# phrases each asset must contain verbatim; loading fails otherwise
ANCHORS = {
    "judge": "Analyze the following LLM conversation for both hallucinations and omissions",
    "statement_extraction": "Extract key factual statements and logical assertions",
    "contradiction_analysis": "identify any contradictions, inconsistencies, or logical incompatibilities",
    "entity_extraction": "Extract all named entities and their relationships",
    "entity_verification": "Verify the plausibility of the following entities",
    "claim_extraction": "Extract verifiable factual claims",
    "claim_verification": "Provide an overall accuracy score for the claim on a 1-10 scale",
    "uncertainty": "linguistic markers of uncertainty and certainty",
    "sentiment_professional": "various emotional and quality aspects",
    "multi_llm_judge": "Therapist impersonation",
    "binary_logit": "single probability between 0 and 1",
}

SCORE = "int[1,10]"

# field -> type; a trailing "?" marks an optional field
OUTPUT_SCHEMAS = {
    "judge": {
        "hal_score": SCORE,
        "omis_score": SCORE,
        "assessment": "str",
        "hallucinated_content": "str?",
        "omitted_content": "str?",
        "confidence": "str?",
        "categories": "list[str]?",
    },
    "statement_extraction": {"statements": "list[statement]"},
    "contradiction_analysis": {
        "pairs": "list[pair]",
        "contradiction_score": SCORE,
        "overall_consistency": "str?",
    },
    "entity_extraction": {"entities": "list[entity]", "relationships": "list[relationship]"},
    "entity_verification": {
        "entity_fabrication_score": SCORE,
        "relationship_fabrication_score": SCORE,
        "explanation": "str?",
    },
    "claim_extraction": {"claims": "list[claim]"},
    "claim_verification": {"accuracy_score": SCORE, "explanation": "str?", "confidence": "str?"},
    "uncertainty": {
        "hedging_score": SCORE,
        "certainty_score": SCORE,
        "epistemic_score": SCORE,
        "vague_score": SCORE,
        "overall_uncertainty_score": SCORE,
        "examples": "str?",
    },
    "sentiment_professional": {
        "relevance_score": SCORE,
        "emotional_tone_score": SCORE,
        "communication_style_score": SCORE,
        "professional_score": SCORE,
        "explanation": "str?",
    },
    "multi_llm_judge": {
        "hallucination": SCORE,
        "omission": SCORE,
        "therapist_impersonation": SCORE,
        "human_likeness": SCORE,
        "contradiction": SCORE,
        "relevance": SCORE,
    },
    "binary_logit": {"hallucination_probability": "float[0,1]"},
}

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
_OUTPUT_SUFFIX = (
    "\n\nOutput format: respond with one JSON object containing the fields listed "
    "below; fields whose type ends in '?' may be omitted. Scores are integers.\n"
    "Schema: {schema}"
)
_TASK_WORD = {"hal": "hallucination", "omis": "omission"}


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    output_schema: dict

    @property
    def placeholders(self) -> tuple:
        return tuple(dict.fromkeys(_PLACEHOLDER.findall(self.body)))

    @property
    def required_fields(self) -> tuple:
        return tuple(f for f, t in self.output_schema.items() if not t.endswith("?"))

    def render(self, bindings: dict) -> str:
        for name in self.placeholders:
            if name not in bindings or bindings[name] is None:
                raise UnboundPlaceholder(name)
        body = _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), self.body)
        return body + _OUTPUT_SUFFIX.format(schema=json.dumps(self.output_schema))


def load_templates(root=None) -> dict:
    """Read every template asset; refuses to load one whose anchor phrase is missing."""
    root = resources.files(__package__) / "templates" if root is None else root
    templates = {}
    for tid in TEMPLATE_IDS:
        body = (root / f"{tid}.txt").read_text(encoding="utf-8").rstrip("\n")
        if ANCHORS[tid] not in body:
            raise TemplateIntegrityError(f"template {tid!r} lacks anchor phrase {ANCHORS[tid]!r}")
        templates[tid] = PromptTemplate(tid, body, OUTPUT_SCHEMAS[tid])
    return templates


TEMPLATES = load_templates()


def _version() -> str:
    h = hashlib.sha256()
    for tid in TEMPLATE_IDS:
        h.update(tid.encode())
        h.update(TEMPLATES[tid].body.encode("utf-8"))
        h.update(json.dumps(TEMPLATES[tid].output_schema, sort_keys=True).encode())
    return f"v{REGISTRY_VERSION}-{h.hexdigest()[:10]}"


TEMPLATE_VERSION = _version()


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown template {template_id!r}") from None


def render(template_id: str, bindings: dict) -> str:
    return get_template(template_id).render(bindings)


def _exemplar_block(n: int, sample, label: int, task: str) -> str:
    word = _TASK_WORD[task]
    verdict = "contains" if label else "does not contain"
    return (
        f"Example {n}:\n"
        f'Original Prompt: "{sample.prompt}"\n'
        f'LLM Response: "{sample.response}"\n'
        f"Gold label: {word} = {label}\n"
        f"Rationale: Expert annotators judged that this response {verdict} {'an' if word[0] == 'o' else 'a'} {word}.\n"
    )


def assemble_few_shot(template_id: str, bindings: dict, exemplars, k: int, task: str = "hal") -> str:
    """Prefix ``k`` labeled examples (half positive, half negative) to a rendered prompt.

    ``exemplars`` is a sequence of ``(sample, labels)`` where ``labels`` maps a
    task name to 0/1. Examples are taken in the given order, alternating
    positive and negative.
    """
    if k not in (0, 2, 4, 6, 8):
        raise ValueError(f"k must be one of 0, 2, 4, 6, 8; got {k}")
    query = render(template_id, bindings)
    if k == 0:
        return query
    pos = [s for s, lab in exemplars if lab.get(task) == 1]
    neg = [s for s, lab in exemplars if lab.get(task) == 0]
    half = k // 2
    if len(pos) < half or len(neg) < half:
        raise InsufficientExemplars(
            f"need {half} positive and {half} negative exemplars for k={k}, "
            f"have {len(pos)} and {len(neg)}"
        )
    blocks = []
    for i in range(half):
        blocks.append(_exemplar_block(2 * i + 1, pos[i], 1, task))
        blocks.append(_exemplar_block(2 * i + 2, neg[i], 0, task))
    header = "The following worked examples show how responses were labeled.\n\n"
    return header + "\n".join(blocks) + "\nNow analyze the following case.\n\n" + query


__all__ = [
    "ANCHORS",
    "OUTPUT_SCHEMAS",
    "PromptTemplate",
    "TEMPLATES",
    "TEMPLATE_IDS",
    "TEMPLATE_VERSION",
    "assemble_few_shot",
    "get_template",
    "load_templates",
    "render",
]
