import json
import threading
import time

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vidpack.evalharness import (
    SYSTEM_PROMPT,
    DuplicateIdError,
    HttpJudge,
    JudgeConfigError,
    Judgement,
    JudgeTransportError,
    MissingKeyError,
    NoMapFoundError,
    NonNumericScoreError,
    QAItem,
    SchemaError,
    StubJudge,
    UnrecognizedPredError,
    WrongItemKindError,
    compute_report,
    judge_items,
    load_qa_dataset,
    match_option,
    parse_judge_response,
    render_judge_prompts,
    score_mcq,
)

ITEM = QAItem("x", "What is the man holding?", "A red umbrella.", "He holds an umbrella that is red.")


class TestPrompts:
    def test_golden(self, golden_dir):
        system, user = render_judge_prompts(ITEM)
        assert system.encode() == (golden_dir / "judge_system_prompt.txt").read_bytes()
        assert user.encode() == (golden_dir / "judge_user_prompt.txt").read_bytes()

    def test_instruction_list(self):
        assert "Focus on the meaningful match" in SYSTEM_PROMPT

    def test_substitution(self):
        _, user = render_judge_prompts(QAItem("y", "Q?", "A", "P"))
        assert "Question: Q?\n" in user
        assert user.endswith("{'pred': 'yes', 'score': 4.8}.")

    def test_braces_in_values_are_not_expanded(self):
        _, user = render_judge_prompts(QAItem("z", "{answer}", "gold", "{pred}"))
        assert "Question: {answer}\nCorrect Answer: gold\nPredicted Answer: {pred}\n" in user

    def test_rejects_mcq(self):
        with pytest.raises(WrongItemKindError):
            render_judge_prompts(QAItem("m", "Q", "A", "B", ("a", "b"), 0))


class TestParse:
    def test_paper_example(self):
        assert parse_judge_response("{'pred': 'yes', 'score': 4.8}") == Judgement("yes", 4.8)

    def test_leading_chatter_and_double_quotes(self):
        assert parse_judge_response('Sure! {"pred": "no", "score": 0}') == Judgement("no", 0.0)

    def test_case_and_whitespace(self):
        assert parse_judge_response("{'pred': ' YES ', 'score': 3}").pred == "yes"

    @pytest.mark.parametrize("raw, score", [("7", 5.0), ("-2", 0.0), ("'4'", 4.0)])
    def test_score_clamped_and_coerced(self, raw, score):
        assert parse_judge_response(f"{{'pred': 'yes', 'score': {raw}}}").score == score

    @pytest.mark.parametrize(
        "text, error",
        [
            ("{'pred': 'maybe', 'score': 3}", UnrecognizedPredError),
            ("{'pred': 1, 'score': 3}", UnrecognizedPredError),
            ("no map here", NoMapFoundError),
            ("{pred: yes}", NoMapFoundError),
            ("{'pred': 'yes'}", MissingKeyError),
            ("{'score': 3}", MissingKeyError),
            ("{'pred': 'yes', 'score': 'high'}", NonNumericScoreError),
            ("{'pred': 'yes', 'score': None}", NonNumericScoreError),
            ("{'pred': 'yes', 'score': True}", NonNumericScoreError),
        ],
    )
    def test_errors(self, text, error):
        with pytest.raises(error):
            parse_judge_response(text)

    @given(
        st.sampled_from(["yes", "no"]),
        st.one_of(st.integers(0, 5), st.integers(0, 50).map(lambda k: k / 10)),
    )
    def test_round_trip(self, pred, score):
        text = repr({"pred": pred, "score": score})
        assert parse_judge_response(text) == Judgement(pred, float(score))


class TestDataset:
    def test_load(self, data_dir):
        items = load_qa_dataset(data_dir / "qa_four.json")
        assert [i.id for i in items] == ["q1", "q2", "q3", "q4"]
        assert not any(i.is_mcq for i in items)

    def test_mcq(self, data_dir):
        items = load_qa_dataset(data_dir / "qa_mcq.json")
        assert items[0].options[1] == "Sheldon" and items[0].gold_option_index == 1

    def test_missing_answer(self, data_dir):
        with pytest.raises(SchemaError, match="item 1.*'answer'") as info:
            load_qa_dataset(data_dir / "qa_missing_answer.json")
        assert info.value.index == 1

    def test_gold_out_of_range(self, data_dir):
        with pytest.raises(SchemaError, match="item 0"):
            load_qa_dataset(data_dir / "qa_bad_gold.json")

    def test_duplicate_ids(self, data_dir):
        with pytest.raises(DuplicateIdError):
            load_qa_dataset(data_dir / "qa_dup.json")


def four_items(data_dir):
    return load_qa_dataset(data_dir / "qa_four.json")


class TestJudging:
    def test_all_yes(self, data_dir):
        judge = StubJudge({"*": "{'pred': 'yes', 'score': 5}"})
        results = judge_items(four_items(data_dir), judge, 2)
        assert all(r.judgement == Judgement("yes", 5.0) for r in results)

    def test_retry_then_success(self, data_dir):
        results = judge_items(four_items(data_dir), StubJudge.from_file(data_dir / "stub_flaky.json"), 4)
        by_id = {r.item_id: r for r in results}
        assert by_id["q1"].ok and by_id["q1"].attempts == 2
        assert by_id["q2"].ok and by_id["q2"].attempts == 3
        assert by_id["q3"].error_kind == "transport" and by_id["q3"].attempts == 3
        assert by_id["q4"].error_kind == "parse"

    def test_order_and_parallelism_independent(self, data_dir):
        items = four_items(data_dir)
        reports = []
        for par in (1, 8):
            judge = StubJudge.from_file(data_dir / "stub_four.json")
            results = judge_items(items, judge, par)
            assert [r.item_id for r in results] == [i.id for i in items]
            reports.append(compute_report(results).to_dict())
        assert reports[0] == reports[1]

    def test_list_script_by_position(self, data_dir):
        script = ["{'pred': 'yes', 'score': 1}", "{'pred': 'no', 'score': 2}"]
        results = judge_items(four_items(data_dir)[:2], StubJudge(script), 2)
        assert [r.judgement.score for r in results] == [1.0, 2.0]

    def test_bounded_in_flight(self):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        class Slow:
            def complete(self, system, user, item_id, index):
                with lock:
                    state["now"] += 1
                    state["peak"] = max(state["peak"], state["now"])
                time.sleep(0.01)
                with lock:
                    state["now"] -= 1
                return "{'pred': 'yes', 'score': 5}"

        items = [QAItem(str(i), "q", "a", "p") for i in range(24)]
        results = judge_items(items, Slow(), 3)
        assert len(results) == 24 and state["peak"] <= 3

    def test_bad_parallelism(self):
        with pytest.raises(ValueError):
            judge_items([], StubJudge({}), 0)


class TestHttpJudge:
    def test_request_and_reply(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers.get("Authorization")
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "{'pred': 'yes', 'score': 4}"}}]})

        judge = HttpJudge("http://judge.test/v1/chat/completions", "secret", "judge-model",
                          transport=httpx.MockTransport(handler))
        [res] = judge_items([ITEM], judge, 1)
        assert res.judgement == Judgement("yes", 4.0)
        assert seen["auth"] == "Bearer secret"
        body = seen["body"]
        assert body["model"] == "judge-model"
        assert [m["role"] for m in body["messages"]] == ["system", "user"]
        assert body["messages"][1]["content"] == render_judge_prompts(ITEM)[1]

    def test_server_errors_retried(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"choices": [{"message": {"content": "{'pred': 'no', 'score': 1}"}}]})

        judge = HttpJudge("http://judge.test/", transport=httpx.MockTransport(handler))
        [res] = judge_items([ITEM], judge, 1)
        assert res.ok and res.attempts == 3

    def test_malformed_reply_is_transport_error(self):
        judge = HttpJudge("http://judge.test/", transport=httpx.MockTransport(
            lambda r: httpx.Response(200, json={"nope": 1})))
        with pytest.raises(JudgeTransportError):
            judge.complete("s", "u")

    def test_from_env(self, monkeypatch):
        monkeypatch.delenv("JUDGE_ENDPOINT", raising=False)
        with pytest.raises(JudgeConfigError):
            HttpJudge.from_env()
        monkeypatch.setenv("JUDGE_ENDPOINT", "http://judge.test/")
        monkeypatch.setenv("JUDGE_MODEL", "m2")
        assert HttpJudge.from_env().model == "m2"


class TestReport:
    def test_hand_arithmetic(self):
        js = [Judgement("yes", 5), Judgement("yes", 4), Judgement("yes", 3), Judgement("no", 0)]
        r = compute_report(js)
        assert (r.n, r.accuracy, r.mean_score, r.failures) == (4, 75.0, 3.0, 0)

    def test_single(self):
        r = compute_report([Judgement("yes", 5)])
        assert (r.accuracy, r.mean_score) == (100.0, 5.0)

    def test_empty(self):
        r = compute_report([])
        assert r.n == 0 and r.accuracy is None and r.mean_score is None

    def test_failures_excluded_from_means(self):
        r = compute_report([Judgement("yes", 4), None, Judgement("no", 2)])
        assert (r.n, r.failures, r.accuracy, r.mean_score) == (3, 1, 50.0, 3.0)

    def test_all_failed(self):
        r = compute_report([None, None])
        assert r.n == 2 and r.failures == 2 and r.accuracy is None

    @given(st.lists(st.tuples(st.booleans(), st.integers(0, 50)), max_size=30), st.randoms())
    def test_bounds_and_permutation(self, raw, rnd):
        js = [Judgement("yes" if y else "no", s / 10) for y, s in raw]
        r1 = compute_report(js)
        shuffled = js[:]
        rnd.shuffle(shuffled)
        r2 = compute_report(shuffled)
        if js:
            assert 0 <= r1.accuracy <= 100 and 0 <= r1.mean_score <= 5
            assert r1.accuracy == pytest.approx(r2.accuracy)
            assert r1.mean_score == pytest.approx(r2.mean_score)


class TestMcq:
    @pytest.mark.parametrize(
        "pred, expected",
        [
            ("B", 1), ("b", None), ("(B)", 1), ("B) Sheldon", 1), ("C. Penny", 2),
            ("Sheldon", 1), ("I believe it was sheldon.", 1), ("not sure", None),
            ("A dog walks in", None), ("F", None),
        ],
    )
    def test_match_option(self, pred, expected):
        assert match_option(pred, ["Leonard", "Sheldon", "Penny", "Howard", "Raj"]) == expected

    def test_longest_contained_option_wins(self):
        assert match_option("a hot dog stand", ["dog", "hot dog"]) == 1

    def test_letter_beyond_options(self):
        assert match_option("E", ["x", "y"]) is None

    def test_dataset(self, data_dir):
        r = score_mcq(load_qa_dataset(data_dir / "qa_mcq.json"))
        assert [p["correct"] for p in r.per_item] == [True, True, False, False]
        assert (r.n, r.accuracy, r.mean_score) == (4, 50.0, None)

    def test_rejects_open_items(self):
        with pytest.raises(ValueError):
            score_mcq([ITEM])
