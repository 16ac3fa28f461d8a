"""Dataset loading, feature stores, splitting, and the synthetic micro-world.

Datasets are JSON Lines records ``{"image_id", "question", "answer"}``;
image features are JSON Lines ``{"image_id", "features": [...]}``. The
micro-world generator produces deterministic scenes of colored shapes at
named positions, renders each scene to a multi-hot feature vector, and
emits templated question/answer records, standing in for DAQUAR or
COCO-VQA at desk scale.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .vocab import tokenize

log = logging.getLogger(__name__)

FORMAT_DAQUAR = "daquar"
FORMAT_VQA = "vqa"

SHAPES = ("cube", "sphere", "pyramid", "cylinder")
COLORS = ("red", "green", "blue", "yellow")
POSITIONS = ("left", "right", "front", "back", "center")
COUNT_WORDS = ("zero", "one", "two", "three", "four")

FEATURE_DIM = len(SHAPES) * len(COLORS) * len(POSITIONS) + 4 + 1  # 85
FEATURE_NOISE = 0.05
MONOCHROME_RATE = 0.25


@dataclass
class DatasetRecord:
    image_id: str
    question: str
    answer: str
    multiword: bool = False


@dataclass
class DatasetSummary:
    images: int
    pairs: int
    flagged_multiword: int
    format: str

    def __str__(self):
        return (
            f"{self.format}: {self.images} images, {self.pairs} question answer pairs"
            f" ({self.flagged_multiword} multi-word answers flagged)"
        )


class FeatureStore:
    """Immutable image_id -> feature vector map with a single shared dim."""

    def __init__(self, features: dict[str, np.ndarray], dim: int):
        self._features = features
        self.dim = dim

    def __getitem__(self, image_id: str) -> np.ndarray:
        return self._features[image_id]

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._features

    def __len__(self) -> int:
        return len(self._features)

    def ids(self) -> list[str]:
        return list(self._features)

    def items(self):
        return self._features.items()


def load_dataset(path, format: str = FORMAT_DAQUAR) -> tuple[list[DatasetRecord], DatasetSummary]:
    """Read a normalized JSONL dataset; multi-word answers are kept but flagged."""
    if format not in (FORMAT_DAQUAR, FORMAT_VQA):
        raise ValueError(f"unknown dataset format {format!r}")
    path = Path(path)
    records: list[DatasetRecord] = []
    flagged = 0
    seen_images = set()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    any_line = False
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        any_line = True
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: malformed JSON ({exc})") from exc
        for key in ("image_id", "question", "answer"):
            if not isinstance(obj.get(key), str) or not obj[key]:
                raise DataError(f"{path}:{line_no}: missing or empty field {key!r}")
        if not tokenize(obj["question"]):
            raise DataError(f"{path}:{line_no}: question normalizes to zero tokens")
        multiword = len(tokenize(obj["answer"])) > 1
        flagged += multiword
        seen_images.add(obj["image_id"])
        records.append(DatasetRecord(obj["image_id"], obj["question"], obj["answer"], multiword))
    if not any_line:
        raise DataError(f"{path}: empty dataset file")
    summary = DatasetSummary(len(seen_images), len(records), flagged, format)
    return records, summary


def write_dataset(path, records: list[DatasetRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            json.dump({"image_id": r.image_id, "question": r.question, "answer": r.answer}, fh, ensure_ascii=False)
            fh.write("\n")


def load_features(path) -> FeatureStore:
    """Read a JSONL feature file; all vectors must share the first record's dim."""
    path = Path(path)
    features: dict[str, np.ndarray] = {}
    dim = None
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read features {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: malformed JSON ({exc})") from exc
        image_id = obj.get("image_id")
        vector = obj.get("features")
        if not isinstance(image_id, str) or not isinstance(vector, list):
            raise DataError(f"{path}:{line_no}: expected image_id and features fields")
        if dim is None:
            dim = len(vector)
        elif len(vector) != dim:
            raise DataError(f"feature dim mismatch for image {image_id!r}: expected {dim}, got {len(vector)}")
        features[image_id] = np.asarray(vector, dtype=np.float64)
    if dim is None:
        raise DataError(f"{path}: empty feature file")
    return FeatureStore(features, dim)


def write_features(path, store: FeatureStore) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, vector in store.items():
            json.dump({"image_id": image_id, "features": vector.tolist()}, fh)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Micro-world
# ---------------------------------------------------------------------------

@dataclass
class MicroWorldScene:
    image_id: str
    objects: list[tuple[str, str, str]] = field(default_factory=list)  # (shape, color, position)


def _triple_index(shape: str, color: str, position: str) -> int:
    return (SHAPES.index(shape) * len(COLORS) + COLORS.index(color)) * len(POSITIONS) + POSITIONS.index(position)


def scene_features(scene: MicroWorldScene, rng: np.random.Generator) -> np.ndarray:
    """Multi-hot triples + one-hot object count + bias, with gaussian noise."""
    vec = np.zeros(FEATURE_DIM)
    for shape, color, position in scene.objects:
        vec[_triple_index(shape, color, position)] = 1.0
    base = len(SHAPES) * len(COLORS) * len(POSITIONS)
    vec[base + len(scene.objects) - 1] = 1.0
    vec[-1] = 1.0
    return vec + rng.normal(0.0, FEATURE_NOISE, FEATURE_DIM)


def scene_records(scene: MicroWorldScene) -> list[DatasetRecord]:
    """Templated questions with one-word answers.

    Color questions fire for shapes that appear exactly once; position
    questions for every occupied position; count questions for all four
    colors (absent colors answer "zero").
    """
    records = []
    shapes = [obj[0] for obj in scene.objects]
    for shape, color, position in scene.objects:
        if shapes.count(shape) == 1:
            records.append(DatasetRecord(scene.image_id, f"what color is the {shape}", color))
        records.append(DatasetRecord(scene.image_id, f"what is on the {position}", shape))
    for color in COLORS:
        count = sum(1 for obj in scene.objects if obj[1] == color)
        records.append(DatasetRecord(scene.image_id, f"how many {color} objects are there", COUNT_WORDS[count]))
    return records


def template_grammar() -> set[str]:
    """Every question surface the micro-world can emit."""
    grammar = {f"what color is the {shape}" for shape in SHAPES}
    grammar |= {f"how many {color} objects are there" for color in COLORS}
    grammar |= {f"what is on the {position}" for position in POSITIONS}
    return grammar


def gen_microworld(n_scenes: int, seed: int) -> tuple[list[DatasetRecord], FeatureStore]:
    """Deterministic synthetic dataset of n_scenes scenes.

    A quarter of the scenes are monochrome so that high object counts of
    a single color (answers "three"/"four") occur often enough to learn.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    rng = np.random.default_rng(seed)
    records: list[DatasetRecord] = []
    features: dict[str, np.ndarray] = {}
    for i in range(n_scenes):
        image_id = f"mw{seed}_{i:05d}"
        n_objects = int(rng.integers(1, 5))
        positions = rng.choice(len(POSITIONS), size=n_objects, replace=False)
        monochrome = rng.random() < MONOCHROME_RATE
        mono_color = COLORS[int(rng.integers(len(COLORS)))]
        objects = []
        for k in range(n_objects):
            shape = SHAPES[int(rng.integers(len(SHAPES)))]
            color = mono_color if monochrome else COLORS[int(rng.integers(len(COLORS)))]
            objects.append((shape, color, POSITIONS[positions[k]]))
        scene = MicroWorldScene(image_id, objects)
        features[image_id] = scene_features(scene, rng)
        records.extend(scene_records(scene))
    return records, FeatureStore(features, FEATURE_DIM)


def verify_record(record: DatasetRecord, features: np.ndarray) -> bool:
    """Check that a micro-world question is answerable from its features.

    The relevant multi-hot bits must be set (read with a 0.5 threshold,
    far above the noise level).
    """
    tokens = tokenize(record.question)
    base = len(SHAPES) * len(COLORS) * len(POSITIONS)
    bits = features[:base].reshape(len(SHAPES), len(COLORS), len(POSITIONS)) > 0.5
    if tokens[:4] == ["what", "color", "is", "the"]:
        shape = tokens[4]
        return bool(bits[SHAPES.index(shape), COLORS.index(record.answer), :].any())
    if tokens[:2] == ["how", "many"]:
        color = tokens[2]
        return int(bits[:, COLORS.index(color), :].sum()) == COUNT_WORDS.index(record.answer)
    if tokens[:4] == ["what", "is", "on", "the"]:
        position = tokens[4]
        return bool(bits[SHAPES.index(record.answer), :, POSITIONS.index(position)].any())
    return False


# ---------------------------------------------------------------------------
# Splits and conversions
# ---------------------------------------------------------------------------

def split(records: list[DatasetRecord], ratio: float, seed: int) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Deterministic train/test partition at image granularity."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    ids = sorted({r.image_id for r in records})
    if len(ids) < 2:
        raise DataError("need at least 2 distinct image ids to split")
    rng = np.random.default_rng(seed)
    order = list(ids)
    rng.shuffle(order)
    n_train = min(max(int(len(order) * ratio + 0.5), 1), len(order) - 1)
    train_ids = set(order[:n_train])
    train = [r for r in records if r.image_id in train_ids]
    test = [r for r in records if r.image_id not in train_ids]
    return train, test


_DAQUAR_IMAGE = re.compile(r"\bimage(\d+)\b")


def normalize_daquar(lines: list[str]) -> list[DatasetRecord]:
    """Convert DAQUAR's native alternating question/answer lines.

    Question lines embed the image reference ("... in the image123 ?");
    the reference clause is stripped from the stored question text.
    """
    cleaned = [line.strip() for line in lines if line.strip()]
    if len(cleaned) % 2 != 0:
        raise DataError("DAQUAR text must alternate question and answer lines")
    records = []
    for q_line, a_line in zip(cleaned[::2], cleaned[1::2]):
        match = _DAQUAR_IMAGE.search(q_line)
        if not match:
            raise DataError(f"no image reference in DAQUAR question: {q_line!r}")
        image_id = match.group(0)
        question = _DAQUAR_IMAGE.sub("", q_line)
        question = re.sub(r"\s+(in|on)\s+the\s*\?", "", question)
        question = re.sub(r"\s+", " ", question).strip(" ?")
        if not question:
            raise DataError(f"question is empty after normalization: {q_line!r}")
        records.append(DatasetRecord(image_id, question, a_line))
    return records
