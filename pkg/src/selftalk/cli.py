"""Command-line entry point wiring the whole pipeline.

Subcommands: gen-data, train-qg, train-qa, ask, answer, talk, score,
gradcheck, serve. Every file-producing run writes a reproducibility
manifest (arguments, seed, input checkpoint hashes, output hashes)
beside its outputs. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, data
from .answerer import AnswererConfig, VisualAnswerer, build_answer_vocab, heldout_accuracy, train_answerer
from .checkpoint import file_sha256
from .errors import DataError, NumericalError, SelfTalkError
from .generator import GeneratorConfig, QuestionGenerator, train_generator
from .loop import SelfTalker, write_transcripts
from .metrics import evaluate_corpus, render_table
from .vocab import build_vocab, encode


class UsageError(SelfTalkError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Output bookkeeping
# ---------------------------------------------------------------------------

class OutputSet:
    """Tracks planned output files: refuses silent overwrites, removes
    partial outputs on failure, and writes the run manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.paths: list[Path] = []
        self.checkpoint_hashes: dict[str, str] = {}

    def plan(self, *paths) -> None:
        force = getattr(self.args, "force", False)
        for path in paths:
            path = Path(path)
            if path.exists() and not force:
                raise UsageError(f"output {path} exists; pass --force to overwrite")
            self.paths.append(path)

    def hash_input(self, label: str, path) -> None:
        self.checkpoint_hashes[label] = file_sha256(path)

    def cleanup(self) -> None:
        for path in self.paths:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass

    def manifest_path(self) -> Path:
        primary = self.paths[0]
        if primary.is_dir():
            return primary / "manifest.json"
        return primary.with_name(primary.stem + ".manifest.json")

    def write_manifest(self) -> Path:
        arguments = {
            k: v for k, v in sorted(vars(self.args).items())
            if k not in ("func", "command") and not k.startswith("_")
        }
        doc = {
            "tool": "selftalk",
            "version": __version__,
            "command": self.command,
            "arguments": {k: str(v) if isinstance(v, Path) else v for k, v in arguments.items()},
            "seed": getattr(self.args, "seed", None),
            "checkpoint_hashes": self.checkpoint_hashes,
            "outputs": {
                str(p): file_sha256(p) for p in self.paths if p.is_file()
            },
        }
        path = self.manifest_path()
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_jsonl(path) -> list[dict]:
    rows = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: malformed JSON ({exc})") from exc
    return rows


def _write_trace_csv(path, trace, accuracy=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if accuracy is None:
            fh.write("epoch,mean_loss\n")
            for epoch, loss in enumerate(trace, start=1):
                fh.write(f"{epoch},{loss!r}\n")
        else:
            fh.write("epoch,mean_loss,heldout_accuracy\n")
            for epoch, (loss, acc) in enumerate(zip(trace, accuracy), start=1):
                fh.write(f"{epoch},{loss!r},{acc!r}\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    features_path = out_dir / "features.jsonl"
    outputs = OutputSet("gen-data", args)
    outputs.plan(records_path, features_path)
    try:
        records, store = data.gen_microworld(args.scenes, args.seed)
        data.write_dataset(records_path, records)
        data.write_features(features_path, store)
    except BaseException:
        outputs.cleanup()
        raise
    outputs.paths.insert(0, out_dir)
    outputs.write_manifest()
    print(f"wrote {len(records)} records over {len(store)} scenes to {out_dir}")
    return 0


def _load_training_data(args):
    records, summary = data.load_dataset(args.data, format=args.format)
    store = data.load_features(args.features)
    missing = sorted({r.image_id for r in records} - set(store.ids()))
    if missing:
        raise DataError(f"{len(missing)} image ids lack features (first: {missing[0]!r})")
    print(summary)
    return records, store


def cmd_train_qg(args) -> int:
    records, store = _load_training_data(args)
    vocab = build_vocab([r.question for r in records], min_count=args.min_count)
    dataset = [(store[r.image_id], encode(vocab, r.question)) for r in records]
    config = GeneratorConfig(
        vocab_size=vocab.size,
        feature_dim=store.dim,
        embed_dim=args.embed,
        hidden_dim=args.hidden,
        max_len=args.max_len,
    )
    out = Path(args.out)
    trace_path = out.with_name(out.stem + ".trace.csv")
    figure_path = out.with_name(out.stem + ".loss.png")
    outputs = OutputSet("train-qg", args)
    outputs.plan(out, trace_path, figure_path)
    try:
        model, trace = train_generator(
            dataset, config, vocab,
            epochs=args.epochs, seed=args.seed,
            learning_rate=args.lr, clip=args.clip,
            lr_halving_epochs=args.lr_halving,
            log_every=args.log_every,
        )
        model.save(out)
        _write_trace_csv(trace_path, trace)
        from .figures import save_loss_curve

        save_loss_curve(trace, figure_path)
    except BaseException:
        outputs.cleanup()
        raise
    outputs.write_manifest()
    if trace:
        print(f"trained {args.epochs} epochs; first epoch loss {trace[0]:.4f}, last {trace[-1]:.4f}")
    print(f"checkpoint: {out}")
    return 0


def cmd_train_qa(args) -> int:
    records, store = _load_training_data(args)
    # question vocabulary covers every question, including those whose
    # multi-word answers are dropped from answer training below
    vocab = build_vocab([r.question for r in records], min_count=args.min_count)
    train_records, heldout_records = data.split(records, args.ratio, args.seed)

    def usable(rs):
        return [r for r in rs if not r.multiword]

    dropped = len(train_records) - len(usable(train_records))
    if dropped:
        print(f"dropped {dropped} multi-word-answer records from answer training")
    train_usable = usable(train_records)
    if not train_usable:
        raise DataError("no single-word-answer records left to train on")
    answer_words = build_answer_vocab([r.answer for r in train_usable])
    config = AnswererConfig(
        vocab_size=vocab.size,
        answer_size=len(answer_words),
        feature_dim=store.dim,
        embed_dim=args.embed,
        hidden_dim=args.hidden,
    )

    def samples(rs):
        return [(store[r.image_id], encode(vocab, r.question), r.answer) for r in rs]

    out = Path(args.out)
    trace_path = out.with_name(out.stem + ".trace.csv")
    figure_path = out.with_name(out.stem + ".loss.png")
    outputs = OutputSet("train-qa", args)
    outputs.plan(out, trace_path, figure_path)
    try:
        heldout_samples = samples(usable(heldout_records))
        model, losses, accuracies = train_answerer(
            samples(train_usable), config, vocab, answer_words,
            epochs=args.epochs, seed=args.seed,
            heldout=heldout_samples,
            learning_rate=args.lr, clip=args.clip,
            optimizer=args.optimizer,
            log_every=args.log_every,
        )
        final_accuracy = heldout_accuracy(model, heldout_samples) if heldout_samples else None
        model.save(out)
        _write_trace_csv(trace_path, losses, accuracies if accuracies else None)
        from .figures import save_loss_curve

        save_loss_curve(losses, figure_path, accuracies or None)
    except BaseException:
        outputs.cleanup()
        raise
    outputs.write_manifest()
    if final_accuracy is not None:
        print(f"final heldout accuracy: {final_accuracy:.4f}")
    print(f"checkpoint: {out}")
    return 0


def _select_images(store: data.FeatureStore, image_ids) -> list[str]:
    if not image_ids:
        return store.ids()
    missing = [i for i in image_ids if i not in store]
    if missing:
        raise DataError(f"image ids not in feature store: {missing}")
    return list(image_ids)


def cmd_ask(args) -> int:
    model = QuestionGenerator.load(args.checkpoint)
    store = data.load_features(args.features)
    if store.dim != model.config.feature_dim:
        raise DataError(f"feature dim {store.dim} != generator feature dim {model.config.feature_dim}")
    images = _select_images(store, args.image_id)
    rng = np.random.default_rng(args.seed)
    rows = []
    for image_id in images:
        for _ in range(args.n):
            result = model.sample(store[image_id], mode=args.mode, seed=int(rng.integers(2**63)))
            rows.append(
                {
                    "image_id": image_id,
                    "question": result.question.surface,
                    "log_prob": result.log_prob,
                    "mode": args.mode,
                }
            )
    if args.out:
        outputs = OutputSet("ask", args)
        outputs.plan(args.out)
        try:
            _write_jsonl(args.out, rows)
        except BaseException:
            outputs.cleanup()
            raise
        outputs.hash_input("generator", args.checkpoint)
        outputs.write_manifest()
    else:
        for row in rows:
            print(json.dumps(row, ensure_ascii=False))
    return 0


def cmd_answer(args) -> int:
    model = VisualAnswerer.load(args.checkpoint)
    store = data.load_features(args.features)
    if args.image_id not in store:
        raise DataError(f"image id {args.image_id!r} not in feature store")
    tokens = encode(model.vocab, args.question)
    if not tokens.ids:
        raise DataError("question normalizes to zero tokens")
    result = model.visual_answer(store[args.image_id], tokens)
    doc = {
        "image_id": args.image_id,
        "question": args.question,
        "answer": result.answer,
        "confidence": result.confidence,
        "distribution": {w: float(p) for w, p in zip(model.answer_words, result.distribution)},
    }
    rendered = json.dumps(doc, ensure_ascii=False, indent=2)
    if args.out:
        outputs = OutputSet("answer", args)
        outputs.plan(args.out)
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
        outputs.hash_input("answerer", args.checkpoint)
        outputs.write_manifest()
    print(rendered)
    return 0


def cmd_talk(args) -> int:
    generator = QuestionGenerator.load(args.generator)
    answerer = VisualAnswerer.load(args.answerer)
    talker = SelfTalker(generator, answerer)
    store = data.load_features(args.features)
    if store.dim != generator.config.feature_dim:
        raise DataError(f"feature dim {store.dim} != generator feature dim {generator.config.feature_dim}")
    images = _select_images(store, args.image_id)
    gen_id = f"{Path(args.generator).name}@{file_sha256(args.generator)[:12]}"
    ans_id = f"{Path(args.answerer).name}@{file_sha256(args.answerer)[:12]}"
    rng = np.random.default_rng(args.seed)
    transcripts = []
    for image_id in images:
        transcript = talker.generate(
            store[image_id],
            image_id,
            n=args.n,
            mode=args.mode,
            threshold=args.threshold,
            dedup=args.dedup,
            seed=int(rng.integers(2**63)),
        )
        transcript.generator_checkpoint = gen_id
        transcript.answerer_checkpoint = ans_id
        transcripts.append(transcript)
    outputs = OutputSet("talk", args)
    outputs.plan(args.out)
    try:
        write_transcripts(args.out, transcripts)
    except BaseException:
        outputs.cleanup()
        raise
    outputs.hash_input("generator", args.generator)
    outputs.hash_input("answerer", args.answerer)
    outputs.write_manifest()
    print(f"wrote {len(transcripts)} transcripts ({args.n} pairs each) to {args.out}")
    return 0


def cmd_score(args) -> int:
    cand_rows = _read_jsonl(args.candidates)
    ref_rows = _read_jsonl(args.references)
    try:
        candidates = {row["id"]: row["text"] for row in cand_rows}
        references = {row["id"]: row["refs"] for row in ref_rows}
    except KeyError as exc:
        raise DataError(f"missing field {exc} in candidate/reference file") from exc
    if len(candidates) != len(cand_rows):
        raise DataError("duplicate ids in candidate file")
    report = evaluate_corpus(candidates, references)
    table = render_table(report, label=args.label)
    print(table)
    out = Path(args.out)
    table_path = out.with_name(out.stem + ".txt")
    figure_path = out.with_name(out.stem + ".png")
    outputs = OutputSet("score", args)
    outputs.plan(out, table_path, figure_path)
    try:
        out.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
        table_path.write_text(table + "\n", encoding="utf-8")
        from .figures import save_metric_bars

        save_metric_bars(report, figure_path, label=args.label)
    except BaseException:
        outputs.cleanup()
        raise
    outputs.write_manifest()
    return 0


def cmd_gradcheck(args) -> int:
    from .checks import answerer_grad_check, generator_grad_check

    reports = {}
    if args.model in ("qgen", "both"):
        reports["qgen"] = generator_grad_check(args.epsilon, args.tolerance, args.seed)
    if args.model in ("vqa", "both"):
        reports["vqa"] = answerer_grad_check(args.epsilon, args.tolerance, args.seed)
    all_passed = True
    for name, report in reports.items():
        print(f"== {name} ==")
        print(report.format())
        all_passed &= report.passed
    if args.out:
        doc = {
            name: {
                "max_rel_error": report.max_rel_error,
                "passed": report.passed,
                "per_param": {c.name: c.max_rel_error for c in report.checks},
            }
            for name, report in reports.items()
        }
        outputs = OutputSet("gradcheck", args)
        outputs.plan(args.out)
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        outputs.write_manifest()
    if not all_passed:
        raise NumericalError("gradient check failed")
    return 0


def cmd_serve(args) -> int:
    from .service import RatingStore, create_app

    store = RatingStore(args.log, feelings=tuple(args.feelings.split(",")), assignment_seed=args.seed)
    for path in args.transcripts:
        store.load_transcript_file(path, image_base=args.image_base)
    app = create_app(store, ui_dir=args.ui)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="selftalk", description=__doc__)
    parser.add_argument("--version", action="version", version=f"selftalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic micro-world dataset")
    p.add_argument("--scenes", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    for name, fn, epochs in (("train-qg", cmd_train_qg, 15), ("train-qa", cmd_train_qa, 30)):
        p = sub.add_parser(name, help=f"train the {'question generator' if name == 'train-qg' else 'visual answerer'}")
        p.add_argument("--data", required=True, help="records JSONL")
        p.add_argument("--features", required=True, help="features JSONL")
        p.add_argument("--format", choices=[data.FORMAT_DAQUAR, data.FORMAT_VQA], default=data.FORMAT_DAQUAR)
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--epochs", type=int, default=epochs)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--hidden", type=int, default=512)
        p.add_argument("--embed", type=int, default=64)
        p.add_argument("--clip", type=float, default=5.0)
        p.add_argument("--min-count", type=int, default=1)
        p.add_argument("--log-every", type=int, default=None)
        p.add_argument("--force", action="store_true")
        if name == "train-qg":
            p.add_argument("--lr", type=float, default=0.1)
            p.add_argument("--lr-halving", type=int, default=5, help="halve the learning rate every N epochs")
            p.add_argument("--max-len", type=int, default=20)
        else:
            p.add_argument("--lr", type=float, default=2e-3)
            p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
            p.add_argument("--ratio", type=float, default=0.8, help="train fraction of the image-id split")
        p.set_defaults(func=fn)

    p = sub.add_parser("ask", help="generate questions for stored image features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--image-id", action="append", default=[])
    p.add_argument("--mode", choices=["max", "sample"], default="sample")
    p.add_argument("--n", type=int, default=1, help="questions per image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("answer", help="answer one question about one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("talk", help="run the self-talk loop over stored features")
    p.add_argument("--generator", required=True)
    p.add_argument("--answerer", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--image-id", action="append", default=[])
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--mode", choices=["max", "sample"], default="sample")
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_talk)

    p = sub.add_parser("score", help="evaluate candidate questions against references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--label", default="corpus")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--model", choices=["qgen", "vqa", "both"], default="both")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the human-rating service")
    p.add_argument("--transcripts", nargs="+", required=True)
    p.add_argument("--log", required=True, help="rating log JSONL path")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None, help="static UI bundle directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feelings", default=",".join(("like", "amusing", "indifferent", "annoyed", "scared")))
    p.add_argument("--image-base", default="")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "code": 1, "kind": "usage"}), file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(json.dumps({"error": str(exc), "code": 3, "kind": "numeric"}), file=sys.stderr)
        return 3
    except (DataError, SelfTalkError) as exc:
        print(json.dumps({"error": str(exc), "code": 2, "kind": "data"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
