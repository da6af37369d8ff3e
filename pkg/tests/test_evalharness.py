import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finadapt.errors import InputDataError
from finadapt.evalharness import (
    EmptyTask,
    EvalSample,
    Prediction,
    TaskSpec,
    accuracy,
    argmax_label,
    classify_constrained,
    entity_f1,
    generate_ner,
    load_task_file,
    run_eval,
    save_predictions,
    weighted_f1,
)
from finadapt.instruct import Task, render_prompt
from finadapt.modelio import CompletionClient, MockModel, ScoredContinuation
from reference_impl import ref_accuracy, ref_argmax_label, ref_entity_f1, ref_weighted_f1


def scored(pairs):
    return [
        ScoredContinuation(continuation=c, total_logprob=lp, token_count=1)
        for c, lp in pairs
    ]


def test_argmax_label_plain():
    labels = ["positive", "negative", "neutral"]
    s = scored([("positive", -2.0), ("negative", -0.3), ("neutral", -5.0)])
    assert argmax_label(labels, s) == "negative"


def test_argmax_label_tie_goes_to_earlier():
    labels = ["neutral", "positive"]
    s = scored([("neutral", -1.0), ("positive", -1.0)])
    assert argmax_label(labels, s) == "neutral"
    assert argmax_label(list(reversed(labels)), list(reversed(s))) == "positive"


def test_classify_constrained_matches_mock_scores():
    mock = MockModel()
    mock.add_scores("Pick:", {"yes": -1.5, "no": -0.5})
    client = CompletionClient(mock)
    label, scores = classify_constrained(client, "Pick:", ["yes", "no"])
    assert label == "no"
    assert scores == {"yes": -1.5, "no": -0.5}


def test_classify_constrained_validates_labels():
    client = CompletionClient(MockModel())
    with pytest.raises(InputDataError):
        classify_constrained(client, "p", [])
    with pytest.raises(InputDataError):
        classify_constrained(client, "p", ["a", "a"])


def test_classify_constrained_order_invariant_without_ties():
    mock = MockModel()
    mock.add_scores("q", {"alpha": -3.0, "beta": -1.0, "gamma": -2.0})
    client = CompletionClient(mock)
    for order in (["alpha", "beta", "gamma"], ["gamma", "alpha", "beta"]):
        label, _ = classify_constrained(client, "q", order)
        assert label == "beta"


def test_generate_ner_parses_and_survives_garbage():
    mock = MockModel()
    mock.add_generation("p-good", " 'Acme, ORG'")
    mock.add_generation("p-bad", "nothing to see")
    client = CompletionClient(mock)
    tags = generate_ner(client, "p-good", sentence="Acme filed a report.")
    assert [(t.surface, t.etype) for t in tags] == [("Acme", "ORG")]
    assert generate_ner(client, "p-bad", sentence="anything") == []


def pred(predicted, gold, subtask=""):
    return Prediction(sample_id="s", predicted=predicted, gold=gold, subtask=subtask)


def test_weighted_f1_hand_example():
    predictions = [
        pred("a", "a"), pred("a", "a"), pred("b", "a"),
        pred("b", "b"),
    ]
    assert weighted_f1(predictions) == pytest.approx(
        float(ref_weighted_f1([(p.predicted, p.gold) for p in predictions]))
    )


def test_accuracy_hand_example():
    predictions = [pred("a", "a"), pred("b", "a"), pred("c", "c")]
    assert accuracy(predictions) == pytest.approx(2 / 3)


def test_entity_f1_hand_example():
    predictions = [
        pred((("Acme", "ORG"),), (("Acme", "ORG"), ("Berlin", "LOC"))),
        pred((), (("Jane", "PER"), ("Doe", "PER"))),
    ]
    assert entity_f1(predictions) == pytest.approx(
        float(ref_entity_f1([(set(p.predicted), set(p.gold)) for p in predictions]))
    )
    assert entity_f1(predictions) == pytest.approx(0.4)


def test_entity_f1_requires_exact_pairs():
    predictions = [pred((("Acme", "LOC"),), (("Acme", "ORG"),))]
    assert entity_f1(predictions) == 0.0


def test_metrics_reject_empty():
    for metric in (weighted_f1, accuracy, entity_f1):
        with pytest.raises(InputDataError):
            metric([])


def test_metrics_match_fraction_oracle_randomized():
    rng = random.Random(20260816)
    for _ in range(40):
        classes = [f"c{k}" for k in range(rng.randint(2, 4))]
        n = rng.randint(1, 10)
        golds = [rng.choice(classes) for _ in range(n)]
        preds = [rng.choice(classes) for _ in range(n)]
        predictions = [pred(p, g) for p, g in zip(preds, golds)]
        pairs = list(zip(preds, golds))
        assert abs(weighted_f1(predictions) - ref_weighted_f1(pairs)) < 1e-12
        assert abs(accuracy(predictions) - ref_accuracy(pairs)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["x", "y", "z"]), min_size=1, max_size=12), st.randoms())
def test_weighted_f1_bounds_and_order_invariance(golds, rnd):
    preds = [rnd.choice(["x", "y", "z"]) for _ in golds]
    predictions = [pred(p, g) for p, g in zip(preds, golds)]
    value = weighted_f1(predictions)
    assert 0.0 <= value <= 1.0
    shuffled = list(predictions)
    rnd.shuffle(shuffled)
    assert weighted_f1(shuffled) == pytest.approx(value)


def test_argmax_matches_reference_on_random_patterns():
    rng = random.Random(7)
    labels = ["l0", "l1", "l2", "l3"]
    for _ in range(200):
        logprobs = [Fraction(rng.randint(-8, 0)) for _ in labels]
        s = scored([(lab, float(lp)) for lab, lp in zip(labels, logprobs)])
        assert argmax_label(labels, s) == ref_argmax_label(labels, logprobs)


def classification_spec(task, samples, labels=("positive", "negative", "neutral")):
    return TaskSpec(
        task=task,
        instruction="Classify the sentiment.",
        samples=tuple(samples),
        label_set=tuple(labels),
    )


def mock_for_spec(spec, winner_for):
    """Score table granting each sample's chosen label the best logprob."""
    mock = MockModel()
    for sample in spec.samples:
        prompt = render_prompt(spec.instruction, sample.input)
        winner = winner_for(sample)
        mock.add_scores(
            prompt,
            {lab: -0.5 if lab == winner else -4.0 for lab in spec.label_set},
        )
    return CompletionClient(mock)


def test_run_eval_all_correct_scores_one():
    samples = [
        EvalSample(sample_id=f"s{k}", input=f"text {k}", gold=("positive", "negative")[k % 2])
        for k in range(6)
    ]
    spec = classification_spec(Task.FPB, samples)
    report = run_eval(spec, mock_for_spec(spec, lambda s: s.gold))
    assert report.value == pytest.approx(1.0)
    assert report.metric_name == "weighted_f1"
    assert report.extra_metrics["accuracy"] == pytest.approx(1.0)
    assert report.sample_count == 6


def test_run_eval_headline_averages_subtasks():
    samples = []
    for name in ("price_up", "price_down", "past_news"):
        for k in range(2):
            samples.append(
                EvalSample(sample_id=f"{name}{k}", input=f"{name} {k}",
                           gold="yes" if k == 0 else "no", subtask=name)
            )
    spec = classification_spec(Task.HEADLINE, samples, labels=("yes", "no"))
    # One subtask fully wrong, two fully right: mean is 2/3.
    client = mock_for_spec(
        spec,
        lambda s: ("no" if s.gold == "yes" else "yes") if s.subtask == "past_news" else s.gold,
    )
    report = run_eval(spec, client)
    assert report.metric_name == "mean_weighted_f1"
    assert set(report.per_subtask) == {"price_up", "price_down", "past_news"}
    assert report.per_subtask["price_up"] == pytest.approx(1.0)
    assert report.per_subtask["past_news"] == pytest.approx(0.0)
    assert report.value == pytest.approx(2 / 3)


def test_run_eval_ner():
    samples = [
        EvalSample(sample_id="n0", input="Acme hired Jane.",
                   gold=(("Acme", "ORG"), ("Jane", "PER"))),
        EvalSample(sample_id="n1", input="Rates held in Berlin.",
                   gold=(("Berlin", "LOC"),)),
    ]
    spec = TaskSpec(task=Task.NER, instruction="List the entities.", samples=tuple(samples))
    mock = MockModel()
    mock.add_generation(render_prompt(spec.instruction, samples[0].input),
                        "'Acme, ORG | Jane, PER'")
    mock.add_generation(render_prompt(spec.instruction, samples[1].input),
                        "'Berlin, LOC'")
    report = run_eval(spec, CompletionClient(mock))
    assert report.metric_name == "entity_f1"
    assert report.value == pytest.approx(1.0)


def test_validate_rejects_empty_and_bad_labels():
    with pytest.raises(EmptyTask):
        TaskSpec(task=Task.FPB, instruction="i", samples=(), label_set=("a", "b")).validate()
    sample = EvalSample(sample_id="s", input="x", gold="a")
    with pytest.raises(InputDataError):
        TaskSpec(task=Task.FPB, instruction="i", samples=(sample,), label_set=("a",)).validate()
    with pytest.raises(InputDataError):
        TaskSpec(
            task=Task.FPB, instruction="i",
            samples=(EvalSample(sample_id="s", input="x", gold="missing"),),
            label_set=("a", "b"),
        ).validate()


def test_load_task_file_classification(tmp_path):
    path = tmp_path / "fpb.task.jsonl"
    lines = [
        {"task": "fpb", "instruction": "Classify.", "labels": ["positive", "negative", "neutral"]},
        {"id": "a", "input": "Profits rose.", "gold": "positive"},
        {"id": "b", "input": "Profits fell.", "gold": "negative"},
    ]
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    spec = load_task_file(path)
    assert spec.task is Task.FPB and len(spec.samples) == 2
    assert spec.samples[0].gold == "positive"


def test_load_task_file_entity_gold_shapes(tmp_path):
    path = tmp_path / "ner.task.jsonl"
    lines = [
        {"task": "ner", "instruction": "List entities."},
        {"id": "a", "input": "Acme hired Jane.", "gold": [["Acme", "ORG"], ["Jane", "PER"]]},
        {"id": "b", "input": "Berlin office opened.", "gold": "Berlin, LOC"},
    ]
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    spec = load_task_file(path)
    assert spec.samples[0].gold == (("Acme", "ORG"), ("Jane", "PER"))
    assert spec.samples[1].gold == (("Berlin", "LOC"),)


def test_load_task_file_errors(tmp_path):
    missing = tmp_path / "nope.jsonl"
    with pytest.raises(InputDataError):
        load_task_file(missing)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    with pytest.raises(EmptyTask):
        load_task_file(empty)
    unknown = tmp_path / "unknown.jsonl"
    unknown.write_text(json.dumps({"task": "mystery"}) + "\n")
    with pytest.raises(InputDataError):
        load_task_file(unknown)


def test_save_predictions_round_trips_shapes(tmp_path):
    path = tmp_path / "preds.jsonl"
    save_predictions(
        [
            Prediction(sample_id="a", predicted="positive", gold="negative",
                       scores={"positive": -0.5}),
            Prediction(sample_id="b", predicted=(("Acme", "ORG"),), gold=(("Acme", "ORG"),)),
        ],
        path,
    )
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0]["predicted"] == "positive" and rows[0]["scores"] == {"positive": -0.5}
    assert rows[1]["predicted"] == [["Acme", "ORG"]]
