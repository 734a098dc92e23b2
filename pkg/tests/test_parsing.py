import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from surgkit.datamodel import (
    BOX_TASKS,
    BoundingBox,
    CvsVector,
    GridCell,
    GridPosition,
    ParseStatus,
    Protocol,
    TaskKind,
    Triplet,
    Turn,
    render_box,
    render_cvs,
    render_label,
)
from surgkit.parsing import (
    ParseConfig,
    ResponseParser,
    Verdict,
    default_config,
    is_refusal,
    match_keyword,
    parse_bboxes,
    parse_choice,
    parse_cvs,
    parse_grid,
    parse_triplet,
    parse_turn,
    round_half_up,
)
from surgkit.pipeline import Lexicon, PromptTemplateSet, enrich_correlations, expand_conversations, generate_explanations
from surgkit.pipeline import load_explanations, load_rules, refine_labels
from surgkit.pipeline.resources import default_vocabulary

from conftest import random_records

REFUSAL = "I'm sorry, but I cannot assist with that request."
OPTIONS = ["preparation", "clipping and cutting", "calot triangle dissection", "gallbladder packaging"]


# ---------------------------------------------------------------- keyword


def test_keyword_phrase_inside_response():
    kw = "development of the plane between the prostate and rectum"
    resp = f"In this frame the surgeon performs the {kw.upper()}  step."
    assert match_keyword(resp, [kw]) is Verdict.CORRECT


def test_keyword_exact_response():
    assert match_keyword("grasper", ["grasper"]) is Verdict.CORRECT


def test_synonym_is_incorrect():
    assert match_keyword("hepatocystic triangle", ["cystohepatic triangle"]) is Verdict.INCORRECT


def test_no_stemming():
    assert match_keyword("the surgeon is dissecting", ["dissection"]) is Verdict.INCORRECT


def test_punctuation_inside_keyword_must_match():
    assert match_keyword("Denonvilliers fascia", ["Denonvilliers' fascia"]) is Verdict.INCORRECT


def test_refusal_checked_first():
    assert match_keyword(REFUSAL + " grasper", ["grasper"]) is Verdict.REFUSED


def test_keywords_required():
    with pytest.raises(ValueError):
        match_keyword("x", [])


def test_default_config_has_refusal_patterns():
    assert default_config().refusal_patterns
    assert is_refusal("I can’t help with that.")


safe_text = st.text(alphabet="abcdefghijklmnopqrstuvwxyz ,.", max_size=40)


@given(safe_text, st.sampled_from(["grasper", "calot triangle dissection", "L-shape hook"]), safe_text, safe_text)
def test_keyword_match_survives_any_suffix(prefix, kw, middle, suffix):
    resp = prefix + " " + kw + middle
    assume(not is_refusal(resp + suffix))
    assert match_keyword(resp, [kw]) is Verdict.CORRECT
    assert match_keyword(resp + suffix, [kw]) is Verdict.CORRECT


# ---------------------------------------------------------------- choice


def test_choice_bare_letter():
    assert parse_choice("B", OPTIONS).value == 1


def test_choice_after_answer_is():
    assert parse_choice("The answer is (C) calot triangle dissection.", OPTIONS).value == 2


def test_choice_option_text():
    assert parse_choice("It looks like gallbladder packaging to me", OPTIONS).value == 3


def test_choice_two_texts_fail():
    res = parse_choice("either preparation or gallbladder packaging", OPTIONS)
    assert res.status is ParseStatus.PARSE_FAILED


def test_choice_letter_rule_precedes_text_rule():
    assert parse_choice("A. although gallbladder packaging is close", OPTIONS).value == 0


def test_choice_refusal():
    assert parse_choice(REFUSAL, OPTIONS).status is ParseStatus.REFUSED


def test_choice_letter_out_of_range_is_not_selected():
    assert parse_choice("E", OPTIONS[:2]).status is ParseStatus.PARSE_FAILED


@given(st.text(max_size=60), st.lists(st.text(min_size=1, max_size=12), min_size=2, max_size=6, unique=True))
def test_choice_index_always_in_range(response, options):
    res = parse_choice(response, options)
    if res.ok:
        assert 0 <= res.value < len(options)


# ---------------------------------------------------------------- boxes


def test_single_bracket_box():
    assert parse_bboxes("[100, 50, 300, 400]").value == (BoundingBox(100, 50, 300, 400),)


def test_two_labelled_boxes():
    res = parse_bboxes("grasper at (10,20),(110,220) and scissors at [5, 5, 50, 60]")
    assert res.value == (BoundingBox(10, 20, 110, 220, "grasper"), BoundingBox(5, 5, 50, 60, "scissors"))


def test_space_separated_box_after_label():
    res = parse_bboxes("hook 10 20 30 40", vocabulary=["hook"])
    assert res.value == (BoundingBox(10, 20, 30, 40, "hook"),)


def test_box_refusal():
    res = parse_bboxes("cannot assist with that request")
    assert res.status is ParseStatus.REFUSED and res.value == ()


def test_invalid_box_dropped_with_diagnostic():
    res = parse_bboxes("[300, 50, 100, 400] and [1, 2, 3, 4]")
    assert res.value == (BoundingBox(1, 2, 3, 4),)
    assert res.diagnostics


def test_coordinates_round_half_up():
    assert parse_bboxes("[0.5, 1.49, 2.5, 3.5]").value == (BoundingBox(1, 1, 3, 4),)
    assert round_half_up(2.5) == 3 and round_half_up(-0.5) == 0


def test_no_boxes_is_failure():
    assert parse_bboxes("nothing here").status is ParseStatus.PARSE_FAILED


coord = st.integers(0, 3000)


@given(st.lists(st.tuples(coord, coord, st.integers(1, 400), st.integers(1, 400), st.sampled_from(["grasper", "bipolar forceps", "L-shape hook"])), min_size=1, max_size=4))
def test_box_rendering_round_trips(items):
    boxes = tuple(BoundingBox(x, y, x + w, y + h, lab) for x, y, w, h, lab in items)
    text = "; ".join(render_box(b) for b in boxes)
    first = parse_bboxes(text, vocabulary=["grasper", "bipolar forceps", "L-shape hook"])
    assert first.value == boxes
    again = parse_bboxes("; ".join(render_box(b) for b in first.value), vocabulary=["grasper", "bipolar forceps", "L-shape hook"])
    assert again.value == first.value


# ---------------------------------------------------------------- triplets


def test_triplet_plain_list():
    assert parse_triplet("grasper, retract, gallbladder").value == Triplet("grasper", "retract", "gallbladder")


def test_triplet_two_instruments_fail():
    res = parse_triplet("the grasper is retracting the gallbladder while the hook dissects")
    assert res.status is ParseStatus.PARSE_FAILED


def test_triplet_longest_match():
    res = parse_triplet("The instrument clipper is used to clip the cystic duct")
    assert res.value == Triplet("clipper", "clip", "cystic duct")


def test_triplet_missing_component():
    assert parse_triplet("grasper and gallbladder").status is ParseStatus.PARSE_FAILED


INSTR = default_vocabulary("cholect50_instrument")
VERBS = default_vocabulary("cholect50_verb")
TARGETS = default_vocabulary("cholect50_target")


@given(st.sampled_from(INSTR), st.sampled_from(VERBS), st.sampled_from(TARGETS))
def test_triplet_rendering_round_trips(i, v, t):
    trip = Triplet(i, v, t)
    assert parse_triplet(render_label(trip)).value == trip


# ---------------------------------------------------------------- CVS


def test_cvs_numbered():
    assert parse_cvs("Criterion 1: yes. Criterion 2: no. Criterion 3: yes.").value == CvsVector(True, False, True)


def test_cvs_all_satisfied():
    assert parse_cvs("All three criteria are satisfied.").value == CvsVector(True, True, True)


def test_cvs_partial_fails():
    assert parse_cvs("the cystic plate is exposed").status is ParseStatus.PARSE_FAILED


def test_cvs_positional():
    assert parse_cvs("yes, no, yes").value == CvsVector(True, False, True)


def test_cvs_none_met():
    assert parse_cvs("None of the criteria are met.").value == CvsVector(False, False, False)


def test_cvs_named_criteria():
    text = "The cystic plate is exposed, the lower third is not cleared, and two structures are identified."
    assert parse_cvs(text).value == CvsVector(True, False, True)


@given(st.booleans(), st.booleans(), st.booleans())
def test_cvs_rendering_round_trips(a, b, c):
    v = CvsVector(a, b, c)
    assert parse_cvs(render_cvs(v)).value == v
    assert parse_cvs(f"The assessment: {render_cvs(v)}.").value == v


# ---------------------------------------------------------------- grid


@given(st.sampled_from(list(GridPosition)))
def test_grid_round_trip(pos):
    assert parse_grid(f"The instrument is at the {pos.value}.").value == GridCell(pos)


def test_grid_ambiguous():
    assert parse_grid("left or right").status is ParseStatus.PARSE_FAILED


# ---------------------------------------------------------------- refusal precedence


@pytest.mark.parametrize(
    "fn",
    [
        lambda r: parse_bboxes(r + " [1, 2, 3, 4]"),
        lambda r: parse_triplet(r + " grasper, retract, gallbladder"),
        lambda r: parse_cvs(r + " all three criteria are met"),
        lambda r: parse_grid(r + " left"),
        lambda r: parse_choice(r + " A", OPTIONS),
    ],
)
def test_refusal_fires_first(fn):
    assert fn(REFUSAL).status is ParseStatus.REFUSED


# ---------------------------------------------------------------- turns


def _corpus_turns(mcq_ratio):
    lexicon = Lexicon.load()
    refined, _ = refine_labels(random_records(400, 21), lexicon)
    explained, _ = generate_explanations(enrich_correlations(refined, load_rules()), load_explanations())
    convs = expand_conversations(explained, PromptTemplateSet.load(), "single_turn", 21, mcq_ratio=mcq_ratio)
    return [(c, t) for c in convs for t in c.turns if t.label is not None]


def _box_vocab(turns):
    return sorted({b.label for _, t in turns if t.task in BOX_TASKS for b in t.label if b.label})


def test_every_ov_reference_answer_parses_back_to_its_label():
    turns = _corpus_turns(0.0)
    boxes = _box_vocab(turns)
    assert {t.task for _, t in turns} >= {TaskKind.TRIPLET_RECOGNITION, TaskKind.CVS_ASSESSMENT, TaskKind.INSTRUMENT_LOCALIZATION_BOX}
    for conv, turn in turns:
        res = parse_turn(turn.answer, turn, Protocol.OV, box_vocabulary=boxes)
        assert res.ok, (turn.template_id, turn.answer, res)
        got = res.value
        if isinstance(turn.label, GridCell):
            assert got.position == turn.label.position
        else:
            assert got == turn.label, (turn.template_id, turn.answer)


def test_every_mcq_turn_answered_by_letter_and_text():
    turns = [(c, t) for c, t in _corpus_turns(1.0) if t.options]
    assert turns
    for conv, turn in turns:
        letter = "ABCDEFGH"[turn.correct_option]
        assert parse_turn(f"{letter}.", turn, Protocol.MCQ).value == turn.label
        assert parse_turn(f"The answer is {letter}", turn, Protocol.MCQ).value == turn.label


def test_ov_wrong_class_is_mapped_to_vocabulary_class():
    turn = Turn("Which phase?", "The phase is preparation.", ("preparation",), TaskKind.PHASE_RECOGNITION, label="preparation")
    res = parse_turn("This is clipping and cutting.", turn, Protocol.OV, class_vocabulary=OPTIONS)
    assert res.value == "clipping and cutting"
    assert parse_turn("no idea", turn, Protocol.OV, class_vocabulary=OPTIONS).status is ParseStatus.PARSE_FAILED


def test_mcq_never_uses_keyword_match(monkeypatch):
    import surgkit.parsing as parsing

    def boom(*a, **k):
        raise AssertionError("match_keyword called under MCQ")

    monkeypatch.setattr(parsing, "match_keyword", boom)
    turn = Turn("q", OPTIONS[2], (OPTIONS[2],), TaskKind.PHASE_RECOGNITION, tuple(OPTIONS), OPTIONS[2])
    assert parse_turn("C", turn, Protocol.MCQ).value == OPTIONS[2]


def test_ov_never_uses_choice(monkeypatch):
    import surgkit.parsing as parsing

    def boom(*a, **k):
        raise AssertionError("parse_choice called under OV")

    monkeypatch.setattr(parsing, "parse_choice", boom)
    turn = Turn("q", "a", ("preparation",), TaskKind.PHASE_RECOGNITION, label="preparation")
    assert parse_turn("preparation", turn, Protocol.OV).ok


def test_response_parser_estimator():
    turn = Turn("q", "a", ("grasper",), TaskKind.INSTRUMENT_RECOGNITION, label="grasper")
    parser = ResponseParser(protocol="ov").fit()
    (res,) = parser.transform([("the grasper is visible", turn)])
    assert res.value == "grasper"
    assert parser.get_params()["protocol"] == "ov"


def test_custom_config_without_case_folding():
    config = ParseConfig.default()
    strict = ParseConfig(casefold=False, collapse_whitespace=True, refusal_patterns=config.refusal_patterns, vocabularies=config.vocabularies, lexicon=config.lexicon)
    assert match_keyword("GRASPER", ["grasper"], strict) is Verdict.INCORRECT
