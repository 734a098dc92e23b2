from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from surgkit.datamodel import (
    Protocol,
    TaskKind,
    Tier,
    normalize_text,
    read_conversations,
    read_corpus,
    render_label,
    validate_conversation,
    write_corpus,
)
from surgkit.pipeline import (
    BuildConfig,
    ConversationExpander,
    CorrelationEnricher,
    ExpansionError,
    ExplanationGenerator,
    LabelRefiner,
    Lexicon,
    PromptTemplateSet,
    StageError,
    build_dataset,
    enrich_correlations,
    expand_conversations,
    explained_answer,
    generate_explanations,
    interleave,
    load_explanations,
    load_rules,
    refine_labels,
)
from surgkit.pipeline.resources import CorrelationRule, LexiconEntry, ResourceError

from conftest import make_record, random_records

OTHER_SENTENCE = "The frame does not contain the defined phases, steps, or instruments."


@pytest.fixture(scope="module")
def lexicon():
    return Lexicon.load()


@pytest.fixture(scope="module")
def prompt_set():
    return PromptTemplateSet.load()


def _explained(records, lexicon):
    refined, _ = refine_labels(records, lexicon)
    out, _ = generate_explanations(enrich_correlations(refined, load_rules()), load_explanations())
    return out


# ---------------------------------------------------------------- stage 1


def test_refine_other_to_sentence(lexicon):
    (rec,), report = refine_labels([make_record(phase_recognition="other")], lexicon)
    assert rec.labels[TaskKind.PHASE_RECOGNITION] == OTHER_SENTENCE
    assert report.n_substitutions == 1


def test_refine_calot_triangle(lexicon):
    (rec,), report = refine_labels([make_record(tissue_recognition="Calot's triangle")], lexicon)
    assert rec.labels[TaskKind.TISSUE_RECOGNITION] == "Cystohepatic Triangle"
    assert report.to_json()["substitutions"][0]["replacement"] == "Cystohepatic Triangle"


def test_refine_canonical_unchanged(lexicon):
    src = make_record(tissue_recognition="Cystohepatic Triangle")
    (rec,), report = refine_labels([src], lexicon)
    assert rec == src and report.n_substitutions == 0


def test_refine_unmapped_is_reported_not_raised(lexicon):
    (rec,), report = refine_labels([make_record(phase_recognition="zzz unknown phase")], lexicon)
    assert rec.labels[TaskKind.PHASE_RECOGNITION] == "zzz unknown phase"
    assert sum(report.unmapped.values()) == 1


def test_refine_triplet_verb_inflection(lexicon):
    from surgkit.datamodel import Triplet

    (rec,), _ = refine_labels([make_record(triplet_recognition=Triplet("grasper", "retracting", "gallbladder"))], lexicon)
    assert rec.labels[TaskKind.TRIPLET_RECOGNITION].verb == "retract"


def test_lexicon_rejects_cycles():
    lex = Lexicon([LexiconEntry("a", "b"), LexiconEntry("b", "c")])
    assert lex.validate()
    with pytest.raises(ResourceError):
        refine_labels([make_record(phase_recognition="a")], lex)


def test_shipped_lexicon_is_valid(lexicon):
    assert lexicon.validate() == []


@given(st.lists(st.sampled_from(["other", "Calot's triangle", "grasper", "x y z", "CalotTriangleDissection"]), max_size=30))
def test_refine_conserves_count(labels):
    lexicon = Lexicon.load()
    records = [make_record(f"s{i}", phase_recognition=v) for i, v in enumerate(labels)]
    refined, report = refine_labels(records, lexicon)
    assert [r.sample_id for r in refined] == [r.sample_id for r in records]
    assert report.records == len(records)
    assert len(enrich_correlations(refined, load_rules())) == len(records)


# ---------------------------------------------------------------- stage 2


def test_enrich_phase_step_statement():
    rec = make_record(phase_recognition="developing the Space of Retzius", step_recognition="prevesical dissection")
    (out,) = enrich_correlations([rec], load_rules())
    texts = [s.text for s in out.statements]
    assert "In the current frame, the phase is developing the Space of Retzius and the step is prevesical dissection." in texts
    assert out.labels == rec.labels


def test_enrich_instrument_action_statement():
    rec = make_record(instrument_recognition="L-shape hook", action_recognition="dissecting")
    (out,) = enrich_correlations([rec], load_rules())
    assert [s.tasks for s in out.statements] == [(TaskKind.INSTRUMENT_RECOGNITION, TaskKind.ACTION_RECOGNITION)]
    assert "L-shape hook" in out.statements[0].text and "dissecting" in out.statements[0].text


def test_enrich_needs_both_labels():
    (out,) = enrich_correlations([make_record(phase_recognition="x")], load_rules())
    assert out.statements == ()


def test_statement_count_bounded_by_rules():
    rules = load_rules()
    for rec in enrich_correlations(random_records(200, 3), rules):
        assert len(rec.statements) <= sum(r.applies(rec.labels) for r in rules)


def test_rule_template_must_use_both_slots():
    with pytest.raises(ResourceError):
        CorrelationRule((TaskKind.PHASE_RECOGNITION, TaskKind.STEP_RECOGNITION), "only {a}")
    with pytest.raises(ResourceError):
        CorrelationRule((TaskKind.PHASE_RECOGNITION, TaskKind.PHASE_RECOGNITION), "{a} {b}")


# ---------------------------------------------------------------- stage 3


def test_explanation_clause_for_known_phase():
    rec = make_record(phase_recognition="development of the plane between prostate and rectum")
    (out,), report = generate_explanations([rec], load_explanations())
    answer = explained_answer(out, TaskKind.PHASE_RECOGNITION)
    assert "during which the surgeons separate the posterior prostatic fascia" in answer
    assert "development of the plane between prostate and rectum" in answer
    assert report.applied == 1


def test_no_template_leaves_answer_unchanged():
    rec = make_record(phase_recognition="some unlisted phase")
    specific_only = [t for t in load_explanations() if t.label is not None]
    (out,), report = generate_explanations([rec], specific_only)
    assert explained_answer(out, TaskKind.PHASE_RECOGNITION) == explained_answer(rec, TaskKind.PHASE_RECOGNITION)
    assert report.missing == 1


def test_keyword_preserved_in_explained_answers(lexicon):
    records = _explained(random_records(1000, 11), lexicon)
    checked = 0
    for rec in records:
        for task, label in rec.labels.items():
            assert render_label(label) in explained_answer(rec, task)
            checked += 1
    assert checked > 1000


# ---------------------------------------------------------------- stage 4


def test_template_counts_within_bounds(prompt_set):
    for task in TaskKind:
        assert 100 <= prompt_set.count(task) <= 200, task
        assert all("{keyword}" in t.answer for t in prompt_set.for_task(task))


def test_expansion_is_deterministic(prompt_set, lexicon):
    records = _explained(random_records(60, 5), lexicon)
    a = expand_conversations(records, prompt_set, "mixed", 9)
    b = expand_conversations(records, prompt_set, "mixed", 9)
    assert a == b
    assert expand_conversations(records, prompt_set, "mixed", 10) != a


def test_multi_turn_orders_by_tier(prompt_set):
    rec = make_record(phase_recognition="calot triangle dissection", instrument_recognition="grasper")
    (conv,) = expand_conversations([rec], prompt_set, "multi_turn", 0, mcq_ratio=0.0)
    assert [t.task for t in conv.turns] == [TaskKind.INSTRUMENT_RECOGNITION, TaskKind.PHASE_RECOGNITION]


def test_every_task_gets_a_conversation(prompt_set, lexicon):
    records = _explained(random_records(80, 2), lexicon)
    convs = expand_conversations(records, prompt_set, "mixed", 1)
    covered = {(c.sample_id, t.task) for c in convs for t in c.turns}
    for rec in records:
        for task in rec.labels:
            assert (rec.sample_id, task) in covered
    assert len(convs) >= len(records)


def test_multi_turn_cap_and_tier_order(prompt_set, lexicon):
    records = _explained(random_records(100, 4), lexicon)
    for conv in expand_conversations(records, prompt_set, "multi_turn", 3):
        assert len(conv.turns) <= 6
        ranks = [t.task.tier.rank for t in conv.turns]
        assert ranks == sorted(ranks)


def test_template_histogram_covers_fifty_per_task(prompt_set, lexicon):
    records = _explained(random_records(100, 7), lexicon)
    convs = expand_conversations(records, prompt_set, "mixed", 7)
    used = {}
    for c in convs:
        for t in c.turns:
            if t.template_id:
                used.setdefault(t.task, set()).add(t.template_id)
    tasks_with_volume = [t for t in used if sum(t in r.labels for r in records) >= 60]
    assert tasks_with_volume
    for task in tasks_with_volume:
        assert len(used[task]) >= 50, (task, len(used[task]))


def test_mcq_answer_among_options_once(prompt_set, lexicon):
    records = _explained(random_records(300, 8), lexicon)
    convs = expand_conversations(records, prompt_set, "mixed", 8, mcq_ratio=0.6)
    mcq = [c for c in convs if c.protocol is Protocol.MCQ]
    assert mcq
    for c in mcq:
        for t in c.turns:
            assert sum(normalize_text(o) == normalize_text(t.answer) for o in t.options) == 1
        assert validate_conversation(c) == []


def test_ov_keywords_verbatim_in_answers(prompt_set, lexicon):
    records = _explained(random_records(300, 9), lexicon)
    for c in expand_conversations(records, prompt_set, "mixed", 9):
        if c.protocol is Protocol.OV:
            for t in c.turns:
                assert all(k in t.answer for k in t.keywords)


@given(st.lists(st.sampled_from(list(TaskKind)), max_size=80), st.integers(1, 5))
def test_interleave_bounds_runs(kinds, k):
    from surgkit.datamodel import Conversation, Turn

    convs = [Conversation(str(i), "s", Protocol.OV, (Turn("q", "a", ("a",), kind),)) for i, kind in enumerate(kinds)]
    out = interleave(convs, k)
    assert sorted(c.conversation_id for c in out) == sorted(c.conversation_id for c in convs)
    distinct = len(set(kinds))
    if distinct > 1:
        # a run longer than k only happens once a single kind is left
        for i in range(len(out) - k):
            window = {c.turns[0].task for c in out[i : i + k + 1]}
            if len(window) == 1:
                rest = {c.turns[0].task for c in out[i:]}
                assert len(rest) == 1


def test_interleave_default_k_on_real_output(prompt_set, lexicon):
    records = _explained(random_records(200, 12), lexicon)
    out = expand_conversations(records, prompt_set, "single_turn", 12)
    run, longest = 1, 1
    for a, b in zip(out, out[1:]):
        run = run + 1 if a.turns[0].task == b.turns[0].task else 1
        longest = max(longest, run)
    assert longest <= 8


def test_zero_templates_is_hard_error(prompt_set):
    empty = PromptTemplateSet({t: v for t, v in prompt_set.templates.items() if t is not TaskKind.CVS_ASSESSMENT})
    from surgkit.datamodel import CvsVector

    with pytest.raises(ExpansionError):
        expand_conversations([make_record(cvs_assessment=CvsVector(True, True, True))], empty, "mixed", 0)


# ---------------------------------------------------------------- build


def _write_config(tmp_path, source, **extra):
    lines = [f'sources = ["{source}"]', f'output = "{tmp_path / "out.jsonl"}"', "seed = 7"]
    lines += [f"{k} = {v!r}" if not isinstance(v, str) else f'{k} = "{v}"' for k, v in extra.items()]
    path = tmp_path / "build.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_build_twice_is_byte_identical(tmp_path):
    src = tmp_path / "src.jsonl"
    write_corpus(random_records(40, 1), src, created_at="t")
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        config = BuildConfig.from_file(_write_config(d, src))
        build_dataset(config.sources, config)
        outs.append((d / "out.jsonl").read_bytes())
    assert outs[0] == outs[1]


def test_build_report_and_stage_lengths(tmp_path):
    src = tmp_path / "src.jsonl"
    records = random_records(10, 6)
    write_corpus(records, src, created_at="t")
    config = BuildConfig.from_file(_write_config(tmp_path, src, intermediate_dir=str(tmp_path / "stages")))
    report = build_dataset(config.sources, config)
    assert [s["stage"] for s in report.stages] == ["refine", "enrich", "explain", "expand"]
    from surgkit.pipeline import record_text_length

    stages = [list(read_corpus(tmp_path / "stages" / f"{n}.jsonl")) for n in ("1_refine", "2_enrich", "3_explain")]
    for a, b, c in zip(*stages):
        assert record_text_length(a) <= record_text_length(b) <= record_text_length(c)
    for stage, recs in zip(report.stages, stages):
        assert stage["records"] == len(recs) == 10
    convs = read_conversations(tmp_path / "out.jsonl")
    assert report.stage("expand")["conversations"] == len(convs) >= 10


def test_build_empty_input(tmp_path):
    src = tmp_path / "src.jsonl"
    write_corpus([], src, created_at="t")
    config = BuildConfig.from_file(_write_config(tmp_path, src))
    report = build_dataset(config.sources, config)
    assert len(read_conversations(tmp_path / "out.jsonl")) == 0
    assert all(s["records"] == 0 for s in report.stages)


def test_build_failure_names_stage(tmp_path):
    src = tmp_path / "src.jsonl"
    write_corpus(random_records(3, 1), src, created_at="t")
    bad = tmp_path / "templates.tsv"
    bad.write_text("phase_recognition\tq\tno slot here\n")
    config = BuildConfig.from_file(_write_config(tmp_path, src, templates_path=str(bad)))
    with pytest.raises(StageError) as err:
        build_dataset(config.sources, config)
    assert err.value.stage == "load"


def test_build_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("colour = 1\n")
    with pytest.raises(ValueError):
        BuildConfig.from_file(path)


# ---------------------------------------------------------------- estimator API


def test_stages_compose_as_sklearn_pipeline(lexicon):
    pipe = make_pipeline(LabelRefiner(), CorrelationEnricher(), ExplanationGenerator(), ConversationExpander(seed=4))
    records = random_records(30, 4)
    convs = pipe.fit_transform(records)
    assert convs == pipe.transform(records)
    assert pipe.get_params()["conversationexpander__seed"] == 4
    again = clone(pipe).set_params(conversationexpander__seed=5).fit_transform(records)
    assert again != convs


def test_refiner_exposes_report():
    refiner = LabelRefiner().fit()
    refiner.transform([make_record(phase_recognition="other")])
    assert refiner.report_.n_substitutions == 1
    assert set(LabelRefiner().get_params()) == {"lexicon"}


def test_expander_multi_turn_ratio_extremes(prompt_set, lexicon):
    records = _explained(random_records(50, 13), lexicon)
    single = expand_conversations(records, prompt_set, "mixed", 0, multi_turn_ratio=0.0)
    assert all(len(c.turns) == 1 for c in single)
    multi = expand_conversations(records, prompt_set, "mixed", 0, multi_turn_ratio=1.0)
    assert Counter(len(c.turns) > 1 for c in multi)[True] > 0
    assert {t.tier for t in TaskKind} == set(Tier)
