from __future__ import annotations

import random
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eligibility_oracle, scale_score_oracle
from sensediary.questionnaire import (
    ComplianceRecord,
    IncompleteSessionError,
    InvalidResponseError,
    Item,
    NonScorableItemError,
    QuestionnaireDef,
    Session,
    StudyStillRunningError,
    VersionMismatchError,
    answer,
    compliance,
    next_question,
    progress,
    sample_questionnaire,
    score_scales,
)

T0 = 1_704_067_200_000


def fresh_session(qdef: QuestionnaireDef) -> Session:
    return Session(version=qdef.version, started_at=T0)


# -- definitions -------------------------------------------------------------


def test_sample_questionnaire_shape():
    qdef = sample_questionnaire()
    assert qdef.version == 1
    assert len(qdef.items) == 10
    assert len(qdef.scales) == 5
    assert all(len(indices) == 2 for indices in qdef.scales.values())
    assert all(item.kind == "likert5" for item in qdef.items)


def test_definition_json_round_trip():
    qdef = sample_questionnaire()
    again = QuestionnaireDef.from_json_text(qdef.to_json_text())
    assert again == qdef
    assert again.to_json_text() == qdef.to_json_text()


def test_definition_validation():
    with pytest.raises(ValueError):
        Item(id="x", prompt="p", kind="matrix")
    with pytest.raises(ValueError):
        Item(id="x", prompt="p", kind="free_text", reverse_keyed=True)
    with pytest.raises(ValueError):
        Item(id="x", prompt="p", kind="single_choice")
    with pytest.raises(ValueError):
        QuestionnaireDef(
            version=1,
            items=(Item(id="a", prompt="p", kind="likert5"),),
            scales={"s": (5,)},
        )


# -- session walk -------------------------------------------------------------


def test_fresh_session_starts_at_item_one():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    assert next_question(session, qdef) == qdef.items[0]
    assert session.cursor == 0


def test_items_come_in_order_then_done():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    seen = []
    while (item := next_question(session, qdef)) is not None:
        seen.append(item.id)
        answer(session, qdef, 3, answered_at=T0 + len(seen))
    assert seen == [item.id for item in qdef.items]
    assert next_question(session, qdef) is None
    assert session.is_completed()
    assert session.completed_at == T0 + 10


def test_nine_answered_shows_item_ten():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    for _ in range(9):
        answer(session, qdef, 2, answered_at=T0)
    assert next_question(session, qdef) == qdef.items[9]


def test_session_file_round_trip_preserves_resume(tmp_path):
    from sensediary.questionnaire import load_session, save_session

    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    for _ in range(6):
        answer(session, qdef, 2, answered_at=T0)
    path = tmp_path / "device" / "session.json"
    save_session(session, path)
    restored = load_session(path)
    assert restored == session
    assert next_question(restored, qdef) == qdef.items[6]


def test_resume_after_reload_continues_where_left_off():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    for _ in range(4):
        answer(session, qdef, 5, answered_at=T0)
    restored = Session.from_json_text(session.to_json_text())
    assert restored.cursor == 4
    assert next_question(restored, qdef) == qdef.items[4]
    # identical behavior from here on
    answer(restored, qdef, 1, answered_at=T0)
    answer(session, qdef, 1, answered_at=T0)
    assert restored.answers == session.answers


def test_version_mismatch_rejected():
    qdef = sample_questionnaire()
    session = Session(version=2, started_at=T0)
    with pytest.raises(VersionMismatchError):
        next_question(session, qdef)
    with pytest.raises(VersionMismatchError):
        progress(session, qdef)


def test_response_validation():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    with pytest.raises(InvalidResponseError):
        answer(session, qdef, 0, answered_at=T0)
    with pytest.raises(InvalidResponseError):
        answer(session, qdef, 6, answered_at=T0)
    with pytest.raises(InvalidResponseError):
        answer(session, qdef, True, answered_at=T0)
    choice_def = QuestionnaireDef(
        version=1,
        items=(Item(id="c", prompt="pick", kind="single_choice", options=("a", "b")),),
        scales={},
    )
    choice_session = fresh_session(choice_def)
    with pytest.raises(InvalidResponseError):
        answer(choice_session, choice_def, "z", answered_at=T0)
    answer(choice_session, choice_def, "b", answered_at=T0)
    assert choice_session.is_completed()


# -- progress -----------------------------------------------------------------


def test_progress_fractions():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    assert progress(session, qdef) == 0.0
    for i in range(3):
        answer(session, qdef, 4, answered_at=T0)
    assert progress(session, qdef) == pytest.approx(0.3)
    while next_question(session, qdef) is not None:
        answer(session, qdef, 4, answered_at=T0)
    assert progress(session, qdef) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=5), min_size=0, max_size=10))
def test_progress_is_monotone(responses):
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    last = progress(session, qdef)
    for response in responses:
        if next_question(session, qdef) is None:
            break
        answer(session, qdef, response, answered_at=T0)
        current = progress(session, qdef)
        assert current >= last
        last = current


# -- scoring ------------------------------------------------------------------


def two_item_def(reverse_second=True):
    return QuestionnaireDef(
        version=1,
        items=(
            Item(id="a", prompt="p1", kind="likert5"),
            Item(id="b", prompt="p2", kind="likert5", reverse_keyed=reverse_second),
        ),
        scales={"s": (0, 1)},
    )


def test_scale_mean_with_reversal():
    qdef = two_item_def()
    session = fresh_session(qdef)
    answer(session, qdef, 4, answered_at=T0)
    answer(session, qdef, 2, answered_at=T0)
    assert score_scales(session, qdef) == {"s": pytest.approx(4.0)}  # (4 + (6-2)) / 2


def test_all_threes_score_three_everywhere():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    while next_question(session, qdef) is not None:
        answer(session, qdef, 3, answered_at=T0)
    scores = score_scales(session, qdef)
    assert set(scores) == set(qdef.scales)
    assert all(value == pytest.approx(3.0) for value in scores.values())


def test_reversal_is_an_involution():
    for response in range(1, 6):
        assert 6 - (6 - response) == response


def test_incomplete_session_cannot_be_scored():
    qdef = sample_questionnaire()
    session = fresh_session(qdef)
    answer(session, qdef, 3, answered_at=T0)
    with pytest.raises(IncompleteSessionError):
        score_scales(session, qdef)


def test_non_likert_scale_item_rejected():
    qdef = QuestionnaireDef(
        version=1,
        items=(
            Item(id="a", prompt="p", kind="likert5"),
            Item(id="b", prompt="p", kind="free_text"),
        ),
        scales={"s": (0, 1)},
    )
    session = fresh_session(qdef)
    answer(session, qdef, 3, answered_at=T0)
    answer(session, qdef, "hello", answered_at=T0)
    with pytest.raises(NonScorableItemError):
        score_scales(session, qdef)


def test_scoring_matches_oracle_on_1000_random_sessions():
    qdef = sample_questionnaire()
    rng = random.Random(77)
    for _ in range(1000):
        session = fresh_session(qdef)
        responses = []
        while next_question(session, qdef) is not None:
            response = rng.randint(1, 5)
            responses.append(response)
            answer(session, qdef, response, answered_at=T0)
        scores = score_scales(session, qdef)
        for name, indices in qdef.scales.items():
            expected = scale_score_oracle(
                [responses[i] for i in indices],
                [qdef.items[i].reverse_keyed for i in indices],
            )
            assert scores[name] == pytest.approx(expected)
            assert 1.0 <= scores[name] <= 5.0


# -- compliance -----------------------------------------------------------------


def record_with(count: int, length=28, threshold=0.8) -> ComplianceRecord:
    start = date(2024, 1, 1)
    days = frozenset(date.fromordinal(start.toordinal() + i) for i in range(count))
    return ComplianceRecord(
        start_date=start, length_days=length, completed_dates=days, threshold=threshold
    )


AFTER = date(2024, 2, 1)


def test_compliance_23_of_28_meets_080():
    result = compliance(record_with(23), today=AFTER)
    assert result.rate == pytest.approx(23 / 28)
    assert result.rate == pytest.approx(0.8214, abs=5e-5)
    assert result.met is True


def test_compliance_22_of_28_misses_080():
    result = compliance(record_with(22), today=AFTER)
    assert result.rate == pytest.approx(0.7857, abs=5e-5)
    assert result.met is False


def test_compliance_zero_completed():
    result = compliance(record_with(0), today=AFTER)
    assert result.rate == 0.0
    assert result.met is False


def test_compliance_before_window_end_rejected():
    with pytest.raises(StudyStillRunningError):
        compliance(record_with(5), today=date(2024, 1, 20))
    # the first day after the window is fine
    assert compliance(record_with(28), today=date(2024, 1, 29)).met is True


def test_completed_dates_outside_window_rejected():
    with pytest.raises(ValueError):
        ComplianceRecord(
            start_date=date(2024, 1, 1),
            length_days=7,
            completed_dates=frozenset({date(2024, 3, 1)}),
        )


@settings(max_examples=200, deadline=None)
@given(
    st.integers(min_value=1, max_value=60),
    st.integers(min_value=0, max_value=60),
    st.floats(min_value=0.05, max_value=1.0),
)
def test_met_boundary_matches_ceiling_oracle(length, completed, threshold):
    completed = min(completed, length)
    record = record_with(completed, length=length, threshold=threshold)
    result = compliance(record, today=date(2024, 6, 1))
    assert result.met == eligibility_oracle(completed, length, threshold)
