"""Self-talk image dialogue at desk scale.

Train a question generator and a visual answerer on (features, question,
answer) data, alternate them into question/answer transcripts, score
generated questions with caption metrics, and collect human ratings of
the transcripts over HTTP.
"""

__version__ = "0.1.0"

from .answerer import AnswererConfig, AnswerResult, VisualAnswerer, train_answerer
from .generator import GenerationResult, GeneratorConfig, QuestionGenerator, train_generator
from .loop import QAPair, SelfTalker, SelfTalkTranscript, transcript_to_text
from .metrics import MetricReport, evaluate_corpus
from .vocab import TokenSequence, Vocabulary, build_vocab, decode, encode, tokenize

__all__ = [
    "AnswererConfig",
    "AnswerResult",
    "GenerationResult",
    "GeneratorConfig",
    "MetricReport",
    "QAPair",
    "QuestionGenerator",
    "SelfTalker",
    "SelfTalkTranscript",
    "TokenSequence",
    "VisualAnswerer",
    "Vocabulary",
    "build_vocab",
    "decode",
    "encode",
    "evaluate_corpus",
    "tokenize",
    "train_answerer",
    "train_generator",
    "transcript_to_text",
]
