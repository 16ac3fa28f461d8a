import json
import math
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from selftalk.errors import DataError
from selftalk.loop import QAPair, SelfTalkTranscript, write_transcripts
from selftalk.service import (
    DEFAULT_FEELINGS,
    METRIC_LABELS,
    RatingStore,
    create_app,
    mean_and_sample_std,
    render_report,
    validate_rating,
    ValidationError,
)


def make_transcripts(n=3, dataset_prefix="img"):
    out = []
    for k in range(n):
        out.append(
            SelfTalkTranscript(
                image_id=f"{dataset_prefix}-{k}",
                pairs=[
                    QAPair("what color is the cube", "red", 0.8, "affirmative", -1.2),
                    QAPair("what is on the left", "sphere", 0.2, "questionable", -2.0),
                ],
                seed=k,
            )
        )
    return out


def make_store(tmp_path, n=3, dataset="micro"):
    store = RatingStore(tmp_path / "ratings.jsonl", assignment_seed=7)
    store.add_transcripts(make_transcripts(n), dataset)
    return store


def rating_body(tid, rater="r1", **overrides):
    body = {
        "transcript_id": tid,
        "rater_id": rater,
        "readability": 4,
        "correctness": 3,
        "human_likeness": 5,
        "feeling": "like",
        "comment": "",
    }
    body.update(overrides)
    return body


# -- validation ---------------------------------------------------------------

def test_validation_rejects_out_of_range_score():
    with pytest.raises(ValidationError) as err:
        validate_rating(rating_body("t", readability=6), DEFAULT_FEELINGS, {"t"})
    assert err.value.field == "readability"


def test_validation_rejects_non_integer_score():
    with pytest.raises(ValidationError) as err:
        validate_rating(rating_body("t", correctness="3"), DEFAULT_FEELINGS, {"t"})
    assert err.value.field == "correctness"
    with pytest.raises(ValidationError):
        validate_rating(rating_body("t", correctness=True), DEFAULT_FEELINGS, {"t"})


def test_validation_rejects_unknown_feeling_and_transcript():
    with pytest.raises(ValidationError) as err:
        validate_rating(rating_body("t", feeling="elated"), DEFAULT_FEELINGS, {"t"})
    assert err.value.field == "feeling"
    with pytest.raises(ValidationError) as err:
        validate_rating(rating_body("nope"), DEFAULT_FEELINGS, {"t"})
    assert err.value.field == "transcript_id"


# -- task assignment --------------------------------------------------------------

def test_next_task_exhausts_all_transcripts(tmp_path):
    store = make_store(tmp_path, n=3)
    seen = set()
    for _ in range(3):
        task = store.next_task("rater-a")
        seen.add(task["transcript_id"])
        store.submit(rating_body(task["transcript_id"], rater="rater-a"))
    assert seen == set(store.transcript_ids())
    assert store.next_task("rater-a") is None


def test_two_raters_each_see_everything(tmp_path):
    store = make_store(tmp_path, n=3)
    seen = {"a": set(), "b": set()}
    for _ in range(3):
        for rater in ("a", "b"):
            task = store.next_task(rater)
            seen[rater].add(task["transcript_id"])
            store.submit(rating_body(task["transcript_id"], rater=rater))
    assert seen["a"] == seen["b"] == set(store.transcript_ids())


def test_next_task_on_empty_store(tmp_path):
    store = RatingStore(tmp_path / "r.jsonl")
    with pytest.raises(DataError):
        store.next_task("r")


# -- submission and replay ----------------------------------------------------------

def test_submit_and_replace(tmp_path):
    store = make_store(tmp_path)
    tid = store.transcript_ids()[0]
    assert store.submit(rating_body(tid, readability=2)) == "created"
    assert store.submit(rating_body(tid, readability=5)) == "replaced"
    report = store.report()
    assert report.count == 1
    assert report.metrics["readability"].mean == 5.0
    # the log keeps both appended records
    assert len((tmp_path / "ratings.jsonl").read_text().splitlines()) == 2


def test_report_is_pure_function_of_log(tmp_path):
    store = make_store(tmp_path)
    ids = store.transcript_ids()
    rng = np.random.default_rng(0)
    for k in range(40):
        tid = ids[int(rng.integers(len(ids)))]
        store.submit(
            rating_body(
                tid,
                rater=f"r{int(rng.integers(5))}",
                readability=int(rng.integers(1, 6)),
                correctness=int(rng.integers(1, 6)),
                human_likeness=int(rng.integers(1, 6)),
                feeling=DEFAULT_FEELINGS[int(rng.integers(5))],
                comment=f"c{k}" if k % 3 == 0 else "",
            )
        )
    live = store.report()
    replayed = RatingStore(tmp_path / "ratings.jsonl", assignment_seed=7)
    replayed.add_transcripts(make_transcripts(3), "micro")
    cold = replayed.report()
    assert json.dumps(live.to_json(), sort_keys=True) == json.dumps(cold.to_json(), sort_keys=True)


def test_concurrent_submissions_keep_log_well_formed(tmp_path):
    store = make_store(tmp_path, n=8)
    ids = store.transcript_ids()
    errors = []

    def worker(rater):
        try:
            for tid in ids:
                store.submit(rating_body(tid, rater=rater))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(f"rater-{k}",)) for k in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    lines = (tmp_path / "ratings.jsonl").read_text().splitlines()
    assert len(lines) == 6 * len(ids)
    for line in lines:
        record = json.loads(line)
        assert 1 <= record["readability"] <= 5
    assert store.report().count == 6 * len(ids)


# -- aggregation -----------------------------------------------------------------------

def test_mean_and_sample_std_hand_case():
    agg = mean_and_sample_std([3, 4, 5])
    assert agg.mean == pytest.approx(4.0)
    assert agg.std == pytest.approx(1.0)


def test_single_rating_std_zero(tmp_path):
    store = make_store(tmp_path)
    store.submit(rating_body(store.transcript_ids()[0]))
    report = store.report()
    assert report.count == 1
    for agg in report.metrics.values():
        assert agg.std == 0.0


def test_report_shapes_and_histogram(tmp_path):
    store = make_store(tmp_path)
    ids = store.transcript_ids()
    for k, tid in enumerate(ids):
        store.submit(rating_body(tid, rater="a", feeling=DEFAULT_FEELINGS[k % 5], comment=f"note {k}"))
    report = store.report("micro")
    assert report.count == len(ids)
    assert sum(report.feelings.values()) == report.count
    assert list(report.feelings) == list(DEFAULT_FEELINGS)
    assert len(report.comments) == len(ids)
    for agg in report.metrics.values():
        assert 1.0 <= agg.mean <= 5.0
        assert agg.std >= 0.0


def test_render_report_format(tmp_path):
    store = make_store(tmp_path)
    for tid in store.transcript_ids():
        store.submit(rating_body(tid, readability=3, correctness=4, human_likeness=5))
    text = render_report([store.report("micro")])
    header = text.splitlines()[0]
    assert "Readability" in header and "Correctness" in header and "Human likeness" in header
    assert list(METRIC_LABELS) == ["Readability", "Correctness", "Human likeness"]
    assert "3.00±0.00" in text.splitlines()[1]


def test_empty_report_variant(tmp_path):
    store = make_store(tmp_path)
    report = store.report("no-such-dataset")
    assert report.count == 0
    assert report.metrics == {}
    assert sum(report.feelings.values()) == 0


# -- HTTP API ------------------------------------------------------------------------------

@pytest.fixture
def client(tmp_path):
    store = make_store(tmp_path, n=3)
    return TestClient(create_app(store))


def test_http_task_flow(client):
    response = client.get("/api/tasks/next", params={"rater": "web"})
    assert response.status_code == 200
    task = response.json()
    assert {"transcript_id", "image_ref", "pairs", "dataset"} <= set(task)
    assert len(task["pairs"]) == 2

    created = client.post("/api/ratings", json=rating_body(task["transcript_id"], rater="web"))
    assert created.status_code == 201
    assert created.json()["status"] == "created"

    report = client.get("/api/report", params={"dataset": "micro"}).json()
    assert report["count"] == 1

    replaced = client.post("/api/ratings", json=rating_body(task["transcript_id"], rater="web", readability=1))
    assert replaced.json()["status"] == "replaced"


def test_http_validation_names_field(client):
    task = client.get("/api/tasks/next", params={"rater": "v"}).json()
    bad = rating_body(task["transcript_id"], rater="v", readability=6)
    response = client.post("/api/ratings", json=bad)
    assert response.status_code == 400
    assert response.json()["field"] == "readability"


def test_http_none_remaining_is_204(client):
    for _ in range(3):
        task = client.get("/api/tasks/next", params={"rater": "done"}).json()
        client.post("/api/ratings", json=rating_body(task["transcript_id"], rater="done"))
    response = client.get("/api/tasks/next", params={"rater": "done"})
    assert response.status_code == 204


def test_http_feelings_endpoint(client):
    assert client.get("/api/feelings").json() == list(DEFAULT_FEELINGS)


def test_http_root_placeholder(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "self-talk" in response.text


def test_transcript_file_loading(tmp_path):
    path = tmp_path / "micro.jsonl"
    write_transcripts(path, make_transcripts(4))
    store = RatingStore(tmp_path / "log.jsonl")
    store.load_transcript_file(path, image_base="https://imgs.example/base")
    assert len(store.transcript_ids()) == 4
    task = store.next_task("r")
    assert task["dataset"] == "micro"
    assert task["image_ref"].startswith("https://imgs.example/base/")
