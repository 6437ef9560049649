import numpy as np
import pytest
from sklearn.base import clone

from halomis.errors import DegenerateLabels, InsufficientExemplars, TemplateIntegrityError, UnboundPlaceholder
from halomis.judge import (
    THRESHOLD_GRID,
    JudgeScores,
    JudgeThresholdClassifier,
    binarize,
    judge_pair,
    parse_judge_record,
    select_threshold,
)
from halomis.prompts import ANCHORS, TEMPLATE_IDS, TEMPLATE_VERSION, TEMPLATES, assemble_few_shot, load_templates, render

from conftest import RoutedBackend, make_sample

# -- prompts ---------------------------------------------------------------


def test_every_template_has_its_anchor():
    assert set(TEMPLATES) == set(TEMPLATE_IDS)
    for tid, anchor in ANCHORS.items():
        assert anchor in TEMPLATES[tid].body


def test_anchors_route_uniquely():
    for tid in TEMPLATE_IDS:
        hits = [other for other, anchor in ANCHORS.items() if anchor in TEMPLATES[tid].body]
        assert hits == [tid]


def test_judge_render_substitutes_and_keeps_scale():
    text = render("judge", {"prompt": "hi", "response": "hello"})
    assert "hi" in text and "hello" in text
    assert "1-10" in text
    assert "Schema: {" in text


def test_unbound_placeholder_named():
    with pytest.raises(UnboundPlaceholder) as err:
        render("judge", {"prompt": "hi"})
    assert err.value.name == "response"


def test_contradiction_embeds_statements():
    listing = "1. A is safe\n2. A is dangerous\n3. B helps"
    text = render("contradiction_analysis", {"statements": listing})
    for line in listing.splitlines():
        assert line in text


def test_braces_in_bindings_left_alone():
    text = render("judge", {"prompt": "use {response} literally", "response": "{}"})
    assert "use {response} literally" in text


def test_render_is_pure():
    b = {"prompt": "p", "response": "r"}
    assert render("judge", b) == render("judge", b)
    assert TEMPLATE_VERSION.startswith("v")


def test_anchor_check_rejects_edited_asset(tmp_path):
    for tid, tpl in TEMPLATES.items():
        (tmp_path / f"{tid}.txt").write_text(tpl.body, encoding="utf-8")
    assert load_templates(tmp_path) == TEMPLATES
    (tmp_path / "uncertainty.txt").write_text("Rate the uncertainty of {response}.", encoding="utf-8")
    with pytest.raises(TemplateIntegrityError):
        load_templates(tmp_path)


def _exemplars(n_pos, n_neg):
    pos = [(make_sample(i, hal=1), {"hal": 1}) for i in range(n_pos)]
    neg = [(make_sample(100 + i, hal=0), {"hal": 0}) for i in range(n_neg)]
    return pos + neg


def test_few_shot_k0_is_render():
    b = {"prompt": "p", "response": "r"}
    assert assemble_few_shot("judge", b, _exemplars(4, 4), 0) == render("judge", b)


def test_few_shot_k2_before_query():
    b = {"prompt": "QUERY-PROMPT", "response": "QUERY-RESPONSE"}
    ex = _exemplars(1, 1)
    text = assemble_few_shot("judge", b, ex, 2)
    query_at = text.index("QUERY-PROMPT")
    for sample, _ in ex:
        assert -1 < text.index(sample.response) < query_at


def test_few_shot_insufficient():
    with pytest.raises(InsufficientExemplars):
        assemble_few_shot("judge", {"prompt": "p", "response": "r"}, _exemplars(2, 1), 4)
    with pytest.raises(ValueError):
        assemble_few_shot("judge", {"prompt": "p", "response": "r"}, _exemplars(2, 2), 3)


# -- judge -----------------------------------------------------------------


def test_judge_pair_mock_reproducible(mock_backend):
    s = make_sample(1)
    a, b = judge_pair(mock_backend, s), judge_pair(mock_backend, s)
    assert (a.hal_score, a.omis_score) == (b.hal_score, b.omis_score)
    assert 1 <= a.hal_score <= 10 and 1 <= a.omis_score <= 10


def test_clamping_records_warning():
    js = parse_judge_record("x", {"hal_score": 12, "omis_score": "0"})
    assert (js.hal_score, js.omis_score) == (10, 1)
    assert len(js.warnings) == 2


def test_judge_pair_parses_routed_reply():
    backend = RoutedBackend({"judge": 'Assessment below.\n{"hal_score": 7, "omis_score": 2, "assessment": "x"}'})
    js = judge_pair(backend, make_sample(0))
    assert (js.hal_score, js.omis_score) == (7, 2)
    assert JudgeScores.from_record("s0000", js.to_record()) == js


def test_judge_few_shot_excludes_self():
    seen = []
    backend = RoutedBackend({"judge": lambda r: seen.append(r.user_text) or {"hal_score": 5, "omis_score": 5,
                                                                           "assessment": ""}})
    target = make_sample(0, hal=1)
    pool = [target, make_sample(1, hal=1), make_sample(2, hal=0)]
    judge_pair(backend, target, pool, k=2)
    assert "worked examples" in seen[0]
    assert seen[0].count(target.response) == 1


def test_fabricated_medication_fixture_is_labeled():
    # kept as a labeled fixture for live backends; only the gold label is asserted here
    s = make_sample(0, hal=1, prompt="Is there a medication for anxiety?",
                    response="Anxiolyze-500 is recommended by 80% of psychiatrists for daily anxiety.")
    assert s.label("hal") == 1
    assert "Anxiolyze-500" in render("judge", {"prompt": s.prompt, "response": s.response})


@pytest.mark.parametrize("score,t,want", [(2, 2, 1), (1, 2, 0), (1, 9, 0), (10, 9, 1), (5, 6, 0)])
def test_binarize(score, t, want):
    assert binarize(score, t) == want


def test_binarize_array():
    assert binarize(np.array([1, 5, 9]), 5).tolist() == [0, 1, 1]


def test_select_threshold_separable_tie():
    labels = np.array([0, 1, 0, 1, 1, 0])
    choice = select_threshold(labels * 9 + 1, labels, "hal")
    assert choice.threshold == 2 and choice.train_f1 == 1.0


def test_select_threshold_planted_five():
    scores = np.array([4, 4, 4, 5, 5, 5, 6, 6, 3])
    labels = np.array([0, 0, 0, 1, 1, 1, 1, 1, 0])
    assert select_threshold(scores, labels).threshold == 5


def test_select_threshold_degenerate():
    with pytest.raises(DegenerateLabels):
        select_threshold([3, 4], [1, 1])


def test_select_threshold_matches_exhaustive_scan():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(4, 30))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(1, 11, n)
        f1s = []
        for t in THRESHOLD_GRID:
            p = s >= t
            tp = int(np.sum(p & (y == 1)))
            prec = tp / p.sum() if p.sum() else 0.0
            rec = tp / y.sum()
            f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        assert select_threshold(s, y).threshold == THRESHOLD_GRID[int(np.argmax(f1s))]


def test_recall_monotone_in_threshold():
    rng = np.random.default_rng(1)
    s = rng.integers(1, 11, 60)
    y = rng.integers(0, 2, 60)
    recalls = [np.sum((s >= t) & (y == 1)) / y.sum() for t in THRESHOLD_GRID]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


def test_threshold_classifier_estimator_api():
    clf = JudgeThresholdClassifier(task="omis")
    assert clf.get_params() == {"task": "omis"}
    X = np.array([[1], [2], [8], [9]])
    y = np.array([0, 0, 1, 1])
    fitted = clone(clf).fit(X, y)
    assert fitted.threshold_ == 3
    assert fitted.predict(np.array([[2], [3]])).tolist() == [0, 1]
