"""Human-evaluation service: serve transcripts, collect ratings, aggregate.

Raters receive transcripts they have not yet rated, score readability,
correctness and human likeness on 1-5 scales, pick one feeling category
and may leave a comment. Ratings land in an append-only JSON Lines log
(last write wins per transcript/rater pair); every report is a pure
function of that log, so replaying it from disk reproduces the report
bit for bit.
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import DataError
from .loop import SelfTalkTranscript, read_transcripts, transcript_to_text

METRICS = ("readability", "correctness", "human_likeness")
METRIC_LABELS = ("Readability", "Correctness", "Human likeness")
DEFAULT_FEELINGS = ("like", "amusing", "indifferent", "annoyed", "scared")


@dataclass
class RatingRecord:
    transcript_id: str
    rater_id: str
    readability: int
    correctness: int
    human_likeness: int
    feeling: str
    comment: str = ""
    timestamp: str = ""

    def to_json(self) -> dict:
        return {
            "transcript_id": self.transcript_id,
            "rater_id": self.rater_id,
            "readability": self.readability,
            "correctness": self.correctness,
            "human_likeness": self.human_likeness,
            "feeling": self.feeling,
            "comment": self.comment,
            "timestamp": self.timestamp,
        }


class ValidationError(ValueError):
    def __init__(self, fld: str, reason: str):
        super().__init__(f"{fld}: {reason}")
        self.field = fld
        self.reason = reason


def validate_rating(body: dict, feelings: tuple[str, ...], known_transcripts) -> RatingRecord:
    """Check a submission body; raises ValidationError naming the bad field."""
    if not isinstance(body, dict):
        raise ValidationError("body", "expected a JSON object")
    for fld in ("transcript_id", "rater_id"):
        value = body.get(fld)
        if not isinstance(value, str) or not value:
            raise ValidationError(fld, "required non-empty string")
    if known_transcripts is not None and body["transcript_id"] not in known_transcripts:
        raise ValidationError("transcript_id", f"unknown transcript {body['transcript_id']!r}")
    scores = {}
    for fld in METRICS:
        value = body.get(fld)
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise ValidationError(fld, "must be an integer between 1 and 5")
        scores[fld] = value
    feeling = body.get("feeling")
    if feeling not in feelings:
        raise ValidationError("feeling", f"must be one of {list(feelings)}")
    comment = body.get("comment", "")
    if not isinstance(comment, str):
        raise ValidationError("comment", "must be a string")
    return RatingRecord(
        transcript_id=body["transcript_id"],
        rater_id=body["rater_id"],
        feeling=feeling,
        comment=comment,
        **scores,
    )


@dataclass
class MetricAggregate:
    mean: float
    std: float


@dataclass
class AggregateReport:
    dataset: str
    count: int
    metrics: dict[str, MetricAggregate]
    feelings: dict[str, int]
    comments: list[str]

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "count": self.count,
            "metrics": {
                name: {"mean": agg.mean, "std": agg.std} for name, agg in self.metrics.items()
            },
            "feelings": self.feelings,
            "comments": self.comments,
        }


def mean_and_sample_std(values: list[int]) -> MetricAggregate:
    """Sample (n-1) standard deviation; a single value has std 0 by convention."""
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return MetricAggregate(mean, 0.0)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return MetricAggregate(mean, math.sqrt(var))


def render_report(reports: list[AggregateReport]) -> str:
    """Text table in the canonical column order with m±s cells."""
    width = 16
    lines = [f"{'':<12s}" + "".join(f"{label:>{width}s}" for label in METRIC_LABELS)]
    for report in reports:
        cells = []
        for name in METRICS:
            agg = report.metrics.get(name)
            cells.append("-" if agg is None else f"{agg.mean:.2f}±{agg.std:.2f}")
        lines.append(f"{report.dataset:<12s}" + "".join(f"{c:>{width}s}" for c in cells))
    return "\n".join(lines)


class RatingStore:
    """Transcript inventory plus the durable rating log.

    Writes are serialized through one lock; the in-memory index is the
    same structure a cold replay of the log produces.
    """

    def __init__(
        self,
        log_path,
        feelings: tuple[str, ...] = DEFAULT_FEELINGS,
        assignment_seed: int = 0,
    ):
        self.log_path = Path(log_path)
        self.feelings = tuple(feelings)
        self._transcripts: dict[str, SelfTalkTranscript] = {}
        self._datasets: dict[str, str] = {}
        self._image_refs: dict[str, str] = {}
        self._ratings: dict[tuple[str, str], RatingRecord] = {}
        self._lock = threading.Lock()
        self._rng = random.Random(assignment_seed)
        if self.log_path.exists():
            self._replay()

    # -- transcripts --------------------------------------------------------

    def add_transcripts(self, transcripts: list[SelfTalkTranscript], dataset: str, image_base: str = "") -> None:
        for transcript in transcripts:
            transcript_id = f"{dataset}:{transcript.image_id}"
            suffix = 1
            while transcript_id in self._transcripts:
                suffix += 1
                transcript_id = f"{dataset}:{transcript.image_id}#{suffix}"
            self._transcripts[transcript_id] = transcript
            self._datasets[transcript_id] = dataset
            ref = transcript.image_id
            if image_base:
                ref = image_base.rstrip("/") + "/" + transcript.image_id
            self._image_refs[transcript_id] = ref

    def load_transcript_file(self, path, dataset: str | None = None, image_base: str = "") -> None:
        path = Path(path)
        name = dataset if dataset else path.stem
        self.add_transcripts(read_transcripts(path), name, image_base)

    def transcript_ids(self) -> list[str]:
        return list(self._transcripts)

    def task_payload(self, transcript_id: str) -> dict:
        transcript = self._transcripts[transcript_id]
        return {
            "transcript_id": transcript_id,
            "dataset": self._datasets[transcript_id],
            "image_id": transcript.image_id,
            "image_ref": self._image_refs[transcript_id],
            "pairs": transcript.to_json()["pairs"],
            "text": transcript_to_text(transcript),
        }

    # -- task assignment ------------------------------------------------------

    def next_task(self, rater_id: str) -> dict | None:
        """A uniformly chosen transcript this rater has not rated, or None."""
        if not self._transcripts:
            raise DataError("transcript store is empty")
        with self._lock:
            unrated = [
                tid for tid in self._transcripts
                if (tid, rater_id) not in self._ratings
            ]
            if not unrated:
                return None
            choice = self._rng.choice(unrated)
        return self.task_payload(choice)

    # -- ratings ----------------------------------------------------------------

    def submit(self, body: dict) -> str:
        """Validate, persist, index. Returns "created" or "replaced"."""
        record = validate_rating(body, self.feelings, self._transcripts)
        record.timestamp = datetime.now(timezone.utc).isoformat()
        key = (record.transcript_id, record.rater_id)
        with self._lock:
            status = "replaced" if key in self._ratings else "created"
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._ratings[key] = record
        return status

    def _replay(self) -> None:
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    record = RatingRecord(**obj)
                except (json.JSONDecodeError, TypeError) as exc:
                    raise DataError(f"{self.log_path}:{line_no}: bad rating record ({exc})") from exc
                self._ratings[(record.transcript_id, record.rater_id)] = record

    def ratings(self) -> list[RatingRecord]:
        return list(self._ratings.values())

    # -- aggregation -----------------------------------------------------------

    def report(self, dataset: str | None = None) -> AggregateReport:
        """Aggregate the latest rating per (transcript, rater) pair."""
        with self._lock:
            selected = [
                record for key, record in self._ratings.items()
                if dataset is None or self._datasets.get(record.transcript_id, "") == dataset
            ]
        label = dataset if dataset else "all"
        if not selected:
            return AggregateReport(
                dataset=label,
                count=0,
                metrics={},
                feelings={f: 0 for f in self.feelings},
                comments=[],
            )
        metrics = {
            name: mean_and_sample_std([getattr(r, name) for r in selected])
            for name in METRICS
        }
        feelings = {f: 0 for f in self.feelings}
        for record in selected:
            feelings[record.feeling] = feelings.get(record.feeling, 0) + 1
        comments = [r.comment for r in selected if r.comment]
        return AggregateReport(label, len(selected), metrics, feelings, comments)


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>self-talk rating</title></head>
<body><h1>self-talk rating service</h1>
<p>No UI bundle is installed. The JSON API lives under <code>/api</code>.</p>
</body></html>
"""


def create_app(store: RatingStore, ui_dir=None):
    """Wire the RatingStore into a FastAPI app (UI bundle served at /)."""
    from fastapi import FastAPI
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import HTMLResponse, JSONResponse, Response

    app = FastAPI(title="self-talk rating service")
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    def body_not_parseable(request, exc):
        return JSONResponse({"field": "body", "reason": "unreadable request body"}, status_code=400)

    @app.get("/api/tasks/next")
    def next_task(rater: str):
        task = store.next_task(rater)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task)

    @app.post("/api/ratings")
    def submit_rating(body: dict):
        try:
            status = store.submit(body)
        except ValidationError as exc:
            return JSONResponse({"field": exc.field, "reason": exc.reason}, status_code=400)
        return JSONResponse({"status": status}, status_code=201)

    @app.get("/api/report")
    def report(dataset: str | None = None):
        return JSONResponse(store.report(dataset).to_json())

    @app.get("/api/feelings")
    def feelings():
        return JSONResponse(list(store.feelings))

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return HTMLResponse(_PLACEHOLDER_PAGE)

    return app
