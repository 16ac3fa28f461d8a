"""The self-talk loop: alternate question sampling and visual answering.

Each round asks the generator for a question about the image features,
sends the question text to the answerer, and records the answer with its
confidence. Answers at or above the confidence threshold are flagged
affirmative, the rest questionable (rendered with a trailing "?").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .answerer import VisualAnswerer
from .errors import DataError
from .generator import MODE_MAX, QuestionGenerator
from .vocab import UNK_ID, TokenSequence, encode

AFFIRMATIVE = "affirmative"
QUESTIONABLE = "questionable"

DEFAULT_ROUNDS = 5
DEFAULT_THRESHOLD = 0.3
RESAMPLE_BUDGET = 10


@dataclass
class QAPair:
    question: str
    answer: str
    confidence: float
    flag: str
    question_log_prob: float
    duplicate: bool = False


@dataclass
class SelfTalkTranscript:
    image_id: str
    pairs: list[QAPair]
    generator_checkpoint: str = ""
    answerer_checkpoint: str = ""
    seed: int = 0
    mode: str = "sample"
    threshold: float = DEFAULT_THRESHOLD

    def to_json(self) -> dict:
        doc = {
            "image_id": self.image_id,
            "seed": self.seed,
            "mode": self.mode,
            "threshold": self.threshold,
            "generator_checkpoint": self.generator_checkpoint,
            "answerer_checkpoint": self.answerer_checkpoint,
            "pairs": [],
        }
        for pair in self.pairs:
            entry = {
                "q": pair.question,
                "a": pair.answer,
                "confidence": pair.confidence,
                "flag": pair.flag,
                "q_log_prob": pair.question_log_prob,
            }
            if pair.duplicate:
                entry["duplicate"] = True
            doc["pairs"].append(entry)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SelfTalkTranscript":
        pairs = [
            QAPair(
                question=entry["q"],
                answer=entry["a"],
                confidence=entry["confidence"],
                flag=entry["flag"],
                question_log_prob=entry["q_log_prob"],
                duplicate=entry.get("duplicate", False),
            )
            for entry in doc["pairs"]
        ]
        return cls(
            image_id=doc["image_id"],
            pairs=pairs,
            generator_checkpoint=doc.get("generator_checkpoint", ""),
            answerer_checkpoint=doc.get("answerer_checkpoint", ""),
            seed=doc.get("seed", 0),
            mode=doc.get("mode", "sample"),
            threshold=doc.get("threshold", DEFAULT_THRESHOLD),
        )


def flag_for(confidence: float, threshold: float) -> str:
    return AFFIRMATIVE if confidence >= threshold else QUESTIONABLE


class SelfTalker:
    """Pairs a trained generator and answerer over the same feature space."""

    def __init__(self, generator: QuestionGenerator, answerer: VisualAnswerer):
        if generator.config.feature_dim != answerer.config.feature_dim:
            raise DataError(
                "feature dim mismatch between generator "
                f"({generator.config.feature_dim}) and answerer ({answerer.config.feature_dim})"
            )
        if generator.vocab.words != answerer.vocab.words:
            raise DataError("generator and answerer were trained with different question vocabularies")
        self.generator = generator
        self.answerer = answerer

    def generate(
        self,
        features: np.ndarray,
        image_id: str,
        n: int = DEFAULT_ROUNDS,
        mode: str = "sample",
        threshold: float = DEFAULT_THRESHOLD,
        dedup: bool = False,
        seed: int = 0,
    ) -> SelfTalkTranscript:
        """Run the loop n times and return the transcript.

        With dedup on, a question already present in the transcript (or an
        empty sample) is redrawn up to RESAMPLE_BUDGET times; an exhausted
        budget keeps the question, marking repeats as duplicates. Dedup is
        rejected in "max" mode, where the greedy question never varies.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if dedup and mode == MODE_MAX:
            raise ValueError("dedup is meaningless in max mode: the greedy question is constant")
        if not image_id:
            raise ValueError("image_id must be non-empty")

        rng = np.random.default_rng(seed)
        seen: set[str] = set()
        pairs: list[QAPair] = []
        for _ in range(n):
            result = self.generator.sample(features, mode=mode, seed=int(rng.integers(2**63)))
            if dedup:
                retries = 0
                while (result.question.surface in seen or not result.question.ids) and retries < RESAMPLE_BUDGET:
                    result = self.generator.sample(features, mode=mode, seed=int(rng.integers(2**63)))
                    retries += 1
            question_text = result.question.surface or ""
            duplicate = dedup and question_text in seen
            seen.add(question_text)

            tokens = encode(self.answerer.vocab, question_text)
            if not tokens.ids:
                # degenerate empty sample: answer a lone UNK token
                tokens = TokenSequence([UNK_ID], surface=question_text)
            answer = self.answerer.visual_answer(features, tokens)
            pairs.append(
                QAPair(
                    question=question_text,
                    answer=answer.answer,
                    confidence=answer.confidence,
                    flag=flag_for(answer.confidence, threshold),
                    question_log_prob=result.log_prob,
                    duplicate=duplicate,
                )
            )
        return SelfTalkTranscript(
            image_id=image_id,
            pairs=pairs,
            seed=seed,
            mode=mode,
            threshold=threshold,
        )


def transcript_to_text(transcript: SelfTalkTranscript) -> str:
    """One "Q: ...? A: ..." line per pair; questionable answers get a trailing "?"."""
    lines = []
    for pair in transcript.pairs:
        question = pair.question if pair.question else "<empty>"
        answer = pair.answer + ("?" if pair.flag == QUESTIONABLE else "")
        lines.append(f"Q: {question}? A: {answer}")
    return "\n".join(lines)


def write_transcripts(path, transcripts: list[SelfTalkTranscript]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for transcript in transcripts:
            json.dump(transcript.to_json(), fh, ensure_ascii=False)
            fh.write("\n")


def read_transcripts(path) -> list[SelfTalkTranscript]:
    transcripts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                transcripts.append(SelfTalkTranscript.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{line_no}: bad transcript record ({exc})") from exc
    return transcripts
