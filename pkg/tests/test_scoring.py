"""Survey scoring: partial sums, the risk threshold, scene progression."""

import pytest
from hypothesis import given, strategies as st

from careflow.model import TaskKind
from careflow.scoring import (
    SCENE,
    SURVEY_COMPLETE,
    IncompleteResponse,
    RiskClass,
    ScoreDefinition,
    SurveyResponse,
    UnknownCharacteristic,
    UnknownOption,
    compute_score,
    next_scene,
)


@pytest.fixture(scope="module")
def score_def(chest_pain_definition) -> ScoreDefinition:
    enquiry = next(
        t for t in chest_pain_definition.tasks if t.kind is TaskKind.ENQUIRY
    )
    return ScoreDefinition(characteristics=enquiry.questions, threshold=enquiry.threshold)


def test_partial_scores(score_def):
    table = {
        q.id: {o.label: o.score for o in q.options}
        for q in score_def.characteristics
    }
    assert table["pain-character"] == {"typical": 3, "atypical": 1, "non-cardiac": 0}
    assert table["pain-location"] == {"retrosternal": 2, "left-side": 1, "other": 0}
    assert table["pain-radiation"] == {"arm-or-jaw": 2, "none": 0}
    assert table["pain-triggers"] == {"exertion": 1, "rest": 0}
    assert score_def.threshold == 4


def _response(character, location, radiation, triggers) -> SurveyResponse:
    return SurveyResponse(answers={
        "pain-character": character,
        "pain-location": location,
        "pain-radiation": radiation,
        "pain-triggers": triggers,
    })


def test_threshold_boundary(score_def):
    # 3 is below the line, 4 sits on it, 5 is above: only 3 is low risk.
    three = compute_score(score_def, _response("atypical", "left-side", "none", "exertion"))
    assert (three.total, three.risk_class) == (3, RiskClass.LOW_RISK)

    four = compute_score(score_def, _response("typical", "left-side", "none", "rest"))
    assert (four.total, four.risk_class) == (4, RiskClass.INTERMEDIATE_HIGH_RISK)

    five = compute_score(score_def, _response("typical", "left-side", "none", "exertion"))
    assert (five.total, five.risk_class) == (5, RiskClass.INTERMEDIATE_HIGH_RISK)


def test_extremes(score_def):
    zero = compute_score(score_def, _response("non-cardiac", "other", "none", "rest"))
    assert (zero.total, zero.risk_class) == (0, RiskClass.LOW_RISK)
    top = compute_score(score_def, _response("typical", "retrosternal", "arm-or-jaw", "exertion"))
    assert (top.total, top.risk_class) == (8, RiskClass.INTERMEDIATE_HIGH_RISK)


def test_incomplete_response(score_def):
    partial = SurveyResponse(answers={"pain-character": "typical"})
    with pytest.raises(IncompleteResponse):
        compute_score(score_def, partial)


def test_unknown_option(score_def):
    with pytest.raises(UnknownOption):
        compute_score(score_def, _response("typical", "left-side", "none", "sometimes"))


def test_unknown_characteristic(score_def):
    bad = _response("typical", "left-side", "none", "rest")
    bad.answers["pain-color"] = "red"
    with pytest.raises(UnknownCharacteristic):
        compute_score(score_def, bad)
    with pytest.raises(UnknownCharacteristic):
        score_def.characteristic("pain-color")


def test_scene_walk_makes_n_minus_1_transitions(score_def):
    """Answering all N characteristics crosses exactly N-1 scene boundaries."""
    response = SurveyResponse()
    seen = []
    scene = next_scene(score_def, response)
    while scene.kind == SCENE:
        seen.append((scene.index, scene.transitions))
        # always pick the first option; scoring is irrelevant here
        response.answers[scene.question.id] = scene.question.options[0].label
        scene = next_scene(score_def, response)

    n = len(score_def.characteristics)
    assert seen == [(i + 1, i) for i in range(n)]
    assert scene.kind == SURVEY_COMPLETE
    assert scene.transitions == n - 1
    assert scene.question is None


@given(st.data())
def test_total_is_sum_of_chosen_partials(score_def, data):
    """The total is the plain sum of the picked options, however chosen."""
    picks = {
        q.id: data.draw(st.sampled_from(q.options), label=q.id)
        for q in score_def.characteristics
    }
    order = data.draw(st.permutations(list(picks)))
    response = SurveyResponse(answers={qid: picks[qid].label for qid in order})
    result = compute_score(score_def, response)
    assert result.total == sum(opt.score for opt in picks.values())
    expected = (
        RiskClass.LOW_RISK if result.total < 4 else RiskClass.INTERMEDIATE_HIGH_RISK
    )
    assert result.risk_class is expected
