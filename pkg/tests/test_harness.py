import csv
import io
import json
import logging
import random

import pytest

from crrkit import (
    ConfigError,
    DataError,
    DecodeConfig,
    DialogueExample,
    EvalReport,
    RuleBasedCritic,
    SelectionRecord,
    ablation_sweep,
    evaluate,
    judge_faithfulness,
    load_dataset,
    render_csv,
    render_text_table,
)
from crrkit.harness import EvalRow, FaithfulnessJudgment


class TestDialogueExample:
    def test_requires_id_and_knowledge(self):
        with pytest.raises(ValueError):
            DialogueExample(id="", knowledge="k")
        with pytest.raises(ValueError):
            DialogueExample(id="e", knowledge="")

    def test_defaults(self):
        ex = DialogueExample(id="e", knowledge="k")
        assert ex.history == ()
        assert ex.reference is None


class TestRuleBasedCritic:
    critic = RuleBasedCritic()

    @pytest.mark.parametrize(
        "knowledge, response, expected",
        [
            ("the lighthouse stands on the rocky point", "the lighthouse stands on the rocky point", 0.0),
            ("red boats sail at dawn", "purple elephants dance", 1.0),
            # 3 of 4 content tokens covered: red, boats, sail; tonight is new.
            ("red boats sail at dawn", "red boats sail tonight", 0.25),
            ("red boat", "red lantern", 0.5),
            ("anything", "", 0.0),
            ("anything", "the of and at", 0.0),
            ("Red BOATS!", "red boats", 0.0),
        ],
    )
    def test_coverage_probability(self, knowledge, response, expected):
        assert self.critic.hallucination_prob(knowledge, response) == pytest.approx(expected)


class TestJudgeFaithfulness:
    def test_faithful_below_threshold(self):
        j = judge_faithfulness("red boats sail at dawn", "red boats sail tonight")
        assert j.hallucination_prob == pytest.approx(0.25)
        assert j.label == "faithful"
        assert j.critic_tag == "rule"

    def test_boundary_counts_as_hallucinated(self):
        # prob exactly 0.5 at threshold 0.5: faithful requires strictly less.
        j = judge_faithfulness("red boat", "red lantern", threshold=0.5)
        assert j.hallucination_prob == pytest.approx(0.5)
        assert j.label == "hallucinated"

    def test_rule_based_alias(self):
        j = judge_faithfulness("red boat", "red boat", critic="rule_based")
        assert j.label == "faithful"

    def test_unknown_critic_string(self):
        with pytest.raises(ConfigError):
            judge_faithfulness("k", "r", critic="remote")

    def test_custom_critic_object(self):
        class Always:
            tag = "always"

            def hallucination_prob(self, knowledge, response):
                return 0.9

        j = judge_faithfulness("k", "r", critic=Always())
        assert j.hallucination_prob == 0.9
        assert j.label == "hallucinated"
        assert j.critic_tag == "always"

    @pytest.mark.parametrize("threshold", [0.0, 1.0, -1.0])
    def test_threshold_bounds(self, threshold):
        with pytest.raises(ValueError):
            judge_faithfulness("k", "r", threshold=threshold)

    def test_judgment_validation(self):
        with pytest.raises(ValueError):
            FaithfulnessJudgment(hallucination_prob=1.5, label="faithful", critic_tag="rule")
        with pytest.raises(ValueError):
            FaithfulnessJudgment(hallucination_prob=0.5, label="maybe", critic_tag="rule")


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class TestLoadDataset:
    def test_generic_records(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [
            {"id": "a", "knowledge": "k1", "history": ["h1", "h2"], "reference": "r1"},
            {"id": "b", "knowledge": "k2", "history": "just one"},
            {"id": "c", "knowledge": "k3"},
        ])
        got = list(load_dataset(str(path), format="generic_jsonl", max_turns=5))
        assert [ex.id for ex in got] == ["a", "b", "c"]
        assert got[0].history == ("h1", "h2")
        assert got[0].reference == "r1"
        assert got[1].history == ("just one",)
        assert got[2].history == ()
        assert got[2].reference is None

    def test_faithdial_field_names(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [
            {"dialog_idx": 7, "knowledge": "k", "history": ["h"], "response": "gold"},
            {"knowledge": "k2"},
        ])
        got = list(load_dataset(str(path), format="faithdial_jsonl"))
        assert got[0].id == "7"
        assert got[0].reference == "gold"
        assert got[1].id == "line-2"

    def test_history_truncated_to_last_turns(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"id": "a", "knowledge": "k", "history": ["h1", "h2", "h3"]}])
        (ex,) = load_dataset(str(path), format="generic_jsonl", max_turns=2)
        assert ex.history == ("h2", "h3")
        (ex,) = load_dataset(str(path), format="generic_jsonl", max_turns=0)
        assert ex.history == ()

    def test_duplicate_id_strict(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [
            {"id": "a", "knowledge": "k"},
            {"id": "a", "knowledge": "k"},
        ])
        with pytest.raises(DataError) as err:
            list(load_dataset(str(path), format="generic_jsonl"))
        assert ":2:" in str(err.value)

    def test_malformed_line_strict_names_position(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "knowledge": "k"}\nnot json\n', encoding="utf-8")
        with pytest.raises(DataError):
            list(load_dataset(str(path), format="generic_jsonl"))

    def test_non_strict_skips_and_warns(self, tmp_path, caplog):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"id": "a", "knowledge": "k"}\n'
            "not json\n"
            '{"id": "b", "knowledge": ""}\n'
            '{"id": "c", "knowledge": "k"}\n',
            encoding="utf-8",
        )
        with caplog.at_level(logging.WARNING, logger="crrkit.harness"):
            got = list(load_dataset(str(path), format="generic_jsonl", strict=False))
        assert [ex.id for ex in got] == ["a", "c"]
        assert sum("skipping malformed line" in r.message for r in caplog.records) == 2

    def test_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('\n{"id": "a", "knowledge": "k"}\n\n', encoding="utf-8")
        assert len(list(load_dataset(str(path), format="generic_jsonl"))) == 1

    def test_empty_dataset_warns(self, tmp_path, caplog):
        path = tmp_path / "d.jsonl"
        path.write_text("", encoding="utf-8")
        with caplog.at_level(logging.WARNING, logger="crrkit.harness"):
            assert list(load_dataset(str(path), format="generic_jsonl")) == []
        assert any("yielded no examples" in r.message for r in caplog.records)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            list(load_dataset(str(tmp_path / "x.jsonl"), format="csv"))

    def test_negative_max_turns(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"id": "a", "knowledge": "k"}])
        with pytest.raises(ValueError):
            list(load_dataset(str(path), format="generic_jsonl", max_turns=-1))


def sel(example_id, text, decode="topk", mitigation="p_crr", n=5):
    return SelectionRecord(
        example_id=example_id, decode_method=decode, mitigation=mitigation,
        n_candidates=n, text=text,
    )


EXAMPLES = [
    DialogueExample(id="e1", knowledge="red boats sail at dawn"),
    DialogueExample(id="e2", knowledge="the keeper lit the lamp"),
]


class TestEvaluate:
    def test_all_faithful_is_100(self):
        report = evaluate([sel("e1", "red boats"), sel("e2", "keeper lit lamp")], EXAMPLES)
        assert report.rows[("topk", "p_crr", 5)].faithful_percent == 100.0
        assert report.rows[("topk", "p_crr", 5)].n_examples == 2

    def test_frozen_forty_percent(self):
        # 2 faithful of 5 in one group -> 40.0 exactly.
        selections = [
            sel("e1", "red boats"),
            sel("e1", "boats sail"),
            sel("e1", "purple elephants"),
            sel("e1", "green lanterns glow"),
            sel("e2", "nothing matches here"),
        ]
        report = evaluate(selections, EXAMPLES)
        assert report.rows[("topk", "p_crr", 5)].faithful_percent == 40.0

    def test_groups_stay_separate(self):
        selections = [
            sel("e1", "red boats", decode="beam", mitigation="none", n=1),
            sel("e1", "purple elephants", decode="beam", mitigation="p_crr", n=5),
        ]
        report = evaluate(selections, EXAMPLES)
        assert report.rows[("beam", "none", 1)].faithful_percent == 100.0
        assert report.rows[("beam", "p_crr", 5)].faithful_percent == 0.0

    def test_orphans_collected_and_sorted(self):
        selections = [sel("zz", "t"), sel("e1", "red boats"), sel("aa", "t")]
        with pytest.raises(DataError) as err:
            evaluate(selections, EXAMPLES)
        assert "aa, zz" in str(err.value)

    def test_order_invariance(self):
        selections = [
            sel("e1", "red boats"),
            sel("e1", "purple elephants"),
            sel("e2", "keeper lit lamp"),
            sel("e2", "watermelon", mitigation="none"),
        ]
        base = evaluate(selections, EXAMPLES)
        for seed in range(5):
            shuffled = selections[:]
            random.Random(seed).shuffle(shuffled)
            assert evaluate(shuffled, EXAMPLES).rows == base.rows

    def test_matches_independent_counter(self):
        # One-pass reimplementation with plain dicts; exact equality.
        selections = [
            sel("e1", "red boats", n=n) for n in (1, 1, 5, 5)
        ] + [
            sel("e1", "purple elephants", n=n) for n in (1, 5, 5)
        ] + [
            sel("e2", "the keeper", mitigation="none"),
        ]
        report = evaluate(selections, EXAMPLES)
        by_id = {ex.id: ex for ex in EXAMPLES}
        expected: dict = {}
        for s in selections:
            label = judge_faithfulness(by_id[s.example_id].knowledge, s.text).label
            cell = expected.setdefault((s.decode_method, s.mitigation, s.n_candidates), [0, 0])
            cell[0] += label == "faithful"
            cell[1] += 1
        for key, (fa, tot) in expected.items():
            assert report.rows[key].faithful_percent == 100.0 * fa / tot
            assert report.rows[key].n_examples == tot

    def test_custom_critic_tag_recorded(self):
        class Zero:
            tag = "zero"

            def hallucination_prob(self, knowledge, response):
                return 0.0

        report = evaluate([sel("e1", "anything")], EXAMPLES, critic=Zero())
        assert report.critic_tag == "zero"
        assert report.rows[("topk", "p_crr", 5)].faithful_percent == 100.0


class TestEvalReport:
    def test_row_validation(self):
        with pytest.raises(ValueError):
            EvalRow(faithful_percent=101.0, n_examples=1)
        with pytest.raises(ValueError):
            EvalRow(faithful_percent=50.0, n_examples=0)

    def test_mapping_round_trip(self):
        report = EvalReport(
            rows={
                ("beam", "none", 5): EvalRow(faithful_percent=50.0, n_examples=4),
                ("topk", "s_crr", 10): EvalRow(faithful_percent=75.0, n_examples=4),
            },
            critic_tag="rule",
            threshold=0.4,
        )
        again = EvalReport.from_mapping(report.to_mapping())
        assert again == report

    def test_from_mapping_rejects_garbage(self):
        with pytest.raises(DataError):
            EvalReport.from_mapping({"rows": [{"decode_method": "beam"}]})


@pytest.fixture(scope="module")
def sweep_examples():
    return [
        DialogueExample(id="s1", knowledge="the lighthouse keeper lit the lamp at dusk"),
        DialogueExample(id="s2", knowledge="fishing boats unload their catch at the harbor"),
        DialogueExample(id="s3", knowledge="ships sail past the lighthouse at night"),
    ]


class TestAblationSweep:
    def test_cells_and_baseline_constancy(self, word_model, sweep_examples):
        report = ablation_sweep(
            word_model,
            sweep_examples,
            decode_methods=["topk", "nucleus_topk"],
            mitigations=["none", "p_crr", "s_crr"],
            n_list=(2, 4),
            base_config=DecodeConfig(max_new_tokens=8),
            base_seed=3,
        )
        for method in ("topk", "nucleus_topk"):
            for mitigation in ("none", "p_crr", "s_crr"):
                for n in (2, 4):
                    row = report.rows[(method, mitigation, n)]
                    assert row.n_examples == 3
                    assert 0.0 <= row.faithful_percent <= 100.0
            # Candidate 0 is pool-size independent, so the unranked
            # baseline cannot move with n.
            assert (
                report.rows[(method, "none", 2)].faithful_percent
                == report.rows[(method, "none", 4)].faithful_percent
            )

    def test_accepts_one_shot_example_iterator(self, word_model, sweep_examples):
        # The sweep walks examples twice; a generator input must not come
        # back empty on the second pass.
        kwargs = dict(
            decode_methods=["topk"],
            mitigations=["none"],
            n_list=(2,),
            base_config=DecodeConfig(max_new_tokens=8),
            base_seed=3,
        )
        from_list = ablation_sweep(word_model, sweep_examples, **kwargs)
        from_iter = ablation_sweep(word_model, iter(sweep_examples), **kwargs)
        assert from_iter.rows == from_list.rows

    def test_deterministic(self, word_model, sweep_examples):
        kwargs = dict(
            decode_methods=["topk"],
            mitigations=["none", "p_crr"],
            n_list=(3,),
            base_config=DecodeConfig(max_new_tokens=8),
            base_seed=5,
        )
        a = ablation_sweep(word_model, sweep_examples, **kwargs)
        b = ablation_sweep(word_model, sweep_examples, **kwargs)
        assert a.rows == b.rows

    def test_rejects_bad_n_list(self, word_model, sweep_examples):
        with pytest.raises(ValueError):
            ablation_sweep(word_model, sweep_examples, ["topk"], ["none"], n_list=())
        with pytest.raises(ValueError):
            ablation_sweep(word_model, sweep_examples, ["topk"], ["none"], n_list=(0, 5))


class TestRenderers:
    report = EvalReport(
        rows={
            ("beam", "none", 5): EvalRow(faithful_percent=50.0, n_examples=4),
            ("beam", "none", 10): EvalRow(faithful_percent=62.5, n_examples=4),
            ("topk", "p_crr", 5): EvalRow(faithful_percent=75.0, n_examples=4),
        }
    )

    def test_text_table_layout(self):
        table = render_text_table(self.report)
        lines = table.splitlines()
        assert lines[0].split() == ["decode", "mitigation", "n=5", "n=10"]
        body = "\n".join(lines[2:])
        assert "50.0" in body and "62.5" in body and "75.0" in body
        # topk was never run at n=10: the empty cell renders as a dash.
        topk_line = next(line for line in lines if line.startswith("topk"))
        assert topk_line.split() == ["topk", "p_crr", "75.0", "-"]

    def test_csv_round_trip(self):
        rows = list(csv.reader(io.StringIO(render_csv(self.report))))
        assert rows[0] == ["decode_method", "mitigation", "n_candidates", "faithful_percent", "n_examples"]
        assert ["beam", "none", "5", "50.0", "4"] in rows
        assert len(rows) == 4
