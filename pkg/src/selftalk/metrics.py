"""Corpus-level evaluation of generated questions against references.

Implements the four caption-metric families in their coco-caption
flavors: corpus BLEU-1..4 (clipped modified n-gram precision, geometric
mean, closest-reference brevity penalty, no smoothing), ROUGE-L
(LCS F-measure, beta=1.2, best reference per item), CIDEr (TF-IDF
n-gram cosine over n=1..4 with a gaussian length penalty, IDF from the
evaluation set's own references, no x10 rescaling) and METEOR-exact
(exact unigram matching with the standard fragmentation penalty; no
stemming or synonym resources).

All scorers take a candidate map ``{item_id: sentence}`` and a reference
map ``{item_id: [sentence, ...]}``; sentences may be raw strings (fed
through the shared tokenizer) or pre-tokenized lists. Items are reduced
in sorted id order so results are deterministic.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass

from .errors import DataError
from .vocab import tokenize

N_MAX = 4
ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


def _tokens(sentence) -> list[str]:
    return tokenize(sentence) if isinstance(sentence, str) else list(sentence)


def _normalize(candidates, references):
    """Validate ids and tokenize; every candidate item needs >= 1 reference."""
    cands = {item: _tokens(sent) for item, sent in candidates.items()}
    refs = {item: [_tokens(r) for r in rlist] for item, rlist in references.items()}
    for item in sorted(cands):
        if not refs.get(item):
            raise DataError(f"item {item!r} has no references")
    return cands, refs


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def bleu(candidates, references, n_max: int = N_MAX) -> list[float]:
    """Corpus BLEU-1..n_max.

    Returns one score per order. A zero clipped precision at any order
    k <= n zeroes BLEU-n (no smoothing). The brevity penalty uses the
    closest reference length per item (ties to the shorter reference),
    summed over the corpus.
    """
    cands, refs = _normalize(candidates, references)
    clipped = [0] * n_max
    totals = [0] * n_max
    cand_len = 0
    ref_len = 0
    for item in sorted(cands):
        cand = cands[item]
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs[item])[1]
        for n in range(1, n_max + 1):
            counts = _ngrams(cand, n)
            max_ref = Counter()
            for ref in refs[item]:
                for gram, count in _ngrams(ref, n).items():
                    max_ref[gram] = max(max_ref[gram], count)
            clipped[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(0, len(cand) - n + 1)

    if cand_len == 0:
        return [0.0] * n_max
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    precisions = [clipped[k] / totals[k] if totals[k] > 0 else 0.0 for k in range(n_max)]
    scores = []
    for n in range(1, n_max + 1):
        if any(precisions[k] == 0.0 for k in range(n)):
            scores.append(0.0)
        else:
            log_mean = sum(math.log(precisions[k]) for k in range(n)) / n
            scores.append(brevity * math.exp(log_mean))
    return scores


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------

def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidates, references, beta: float = ROUGE_BETA) -> float:
    """Mean over items of the best-reference LCS F-measure."""
    cands, refs = _normalize(candidates, references)
    total = 0.0
    for item in sorted(cands):
        cand = cands[item]
        best = 0.0
        for ref in refs[item]:
            lcs = _lcs_length(cand, ref)
            if lcs == 0 or not cand or not ref:
                continue
            precision = lcs / len(cand)
            recall = lcs / len(ref)
            score = ((1 + beta**2) * precision * recall) / (recall + beta**2 * precision)
            best = max(best, score)
        total += best
    return total / len(cands) if cands else 0.0


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------

def cider(candidates, references, n_max: int = N_MAX, sigma: float = CIDER_SIGMA) -> float:
    """TF-IDF weighted n-gram cosine consensus.

    IDF is log(N / df) where df counts, over the evaluation set itself,
    the items whose reference set contains the n-gram. Each
    candidate/reference cosine is damped by a gaussian penalty on the
    length difference, then averaged over references, orders 1..n_max
    and items.
    """
    cands, refs = _normalize(candidates, references)
    items = sorted(cands)
    n_items = len(items)
    if n_items == 0:
        return 0.0
    if n_items < 2:
        warnings.warn("CIDEr IDF is degenerate with fewer than 2 items", stacklevel=2)

    doc_freq = Counter()
    for item in items:
        seen = set()
        for ref in refs[item]:
            for n in range(1, n_max + 1):
                seen.update(_ngrams(ref, n))
        doc_freq.update(seen)
    log_items = math.log(n_items)

    def tfidf_vector(tokens, n):
        vec = {}
        norm_sq = 0.0
        for gram, count in _ngrams(tokens, n).items():
            weight = count * (log_items - math.log(max(1.0, doc_freq[gram])))
            vec[gram] = weight
            norm_sq += weight * weight
        return vec, math.sqrt(norm_sq)

    total = 0.0
    for item in items:
        cand = cands[item]
        item_score = 0.0
        for n in range(1, n_max + 1):
            cand_vec, cand_norm = tfidf_vector(cand, n)
            order_score = 0.0
            for ref in refs[item]:
                ref_vec, ref_norm = tfidf_vector(ref, n)
                if cand_norm == 0.0 or ref_norm == 0.0:
                    continue
                dot = sum(w * ref_vec[g] for g, w in cand_vec.items() if g in ref_vec)
                delta = len(cand) - len(ref)
                order_score += (dot / (cand_norm * ref_norm)) * math.exp(-(delta**2) / (2 * sigma**2))
            item_score += order_score / len(refs[item])
        total += item_score / n_max
    return total / n_items


# ---------------------------------------------------------------------------
# METEOR (exact unigram variant)
# ---------------------------------------------------------------------------

def _min_chunks(cand: list[str], ref: list[str]) -> int:
    """Minimal chunk count over all maximum-cardinality exact alignments.

    A chunk is a maximal run of candidate positions i, i+1, ... matched
    to consecutive reference positions j, j+1, ... Exhaustive search with
    memoization and branch-and-bound; exact for the short sentences this
    package evaluates.
    """
    cand_counts, ref_counts = Counter(cand), Counter(ref)
    quota = {w: min(cand_counts[w], ref_counts[w]) for w in cand_counts if w in ref_counts}
    match_total = sum(quota.values())
    if match_total == 0:
        return 0

    ref_positions = {}
    for j, w in enumerate(ref):
        if w in quota:
            ref_positions.setdefault(w, []).append(j)
    n = len(cand)
    suffix = [Counter() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1].copy()
        if cand[i] in quota:
            suffix[i][cand[i]] += 1

    best = match_total  # one chunk per match is always achievable
    memo: dict = {}
    needed = dict(quota)

    def search(i, mask, last_j, chunks, matched):
        nonlocal best
        if chunks >= best:
            return
        if i == n:
            if matched == match_total:
                best = chunks
            return
        state = (i, mask, last_j)
        prior = memo.get(state)
        if prior is not None and prior <= chunks:
            return
        memo[state] = chunks
        word = cand[i]
        if word in needed:
            if needed[word] > 0:
                for j in ref_positions[word]:
                    if not mask >> j & 1:
                        needed[word] -= 1
                        search(i + 1, mask | (1 << j), j, chunks + (0 if j == last_j + 1 else 1), matched + 1)
                        needed[word] += 1
            if suffix[i + 1][word] >= needed[word]:
                search(i + 1, mask, -2, chunks, matched)
        else:
            search(i + 1, mask, -2, chunks, matched)

    search(0, 0, -2, 0, 0)
    return best


def _meteor_pair(cand: list[str], ref: list[str], alpha: float, beta: float, gamma: float) -> float:
    cand_counts, ref_counts = Counter(cand), Counter(ref)
    matches = sum(min(c, ref_counts[w]) for w, c in cand_counts.items() if w in ref_counts)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    chunks = _min_chunks(cand, ref)
    penalty = gamma * (chunks / matches) ** beta
    return f_mean * (1.0 - penalty)


def meteor_exact(
    candidates,
    references,
    alpha: float = METEOR_ALPHA,
    beta: float = METEOR_BETA,
    gamma: float = METEOR_GAMMA,
) -> float:
    """Exact-unigram METEOR: harmonic-mean F times (1 - fragmentation penalty).

    Matches are exact token matches only; the chunk count is the minimum
    over maximum alignments. Per item the best reference wins; the corpus
    score is the item mean.
    """
    cands, refs = _normalize(candidates, references)
    total = 0.0
    for item in sorted(cands):
        total += max(_meteor_pair(cands[item], ref, alpha, beta, gamma) for ref in refs[item])
    return total / len(cands) if cands else 0.0


# ---------------------------------------------------------------------------
# Corpus report
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("CIDEr", "METEOR", "ROUGE_L", "Bleu-1", "Bleu-2", "Bleu-3", "Bleu-4")


@dataclass
class MetricReport:
    cider: float
    meteor: float
    rouge_l: float
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    items: int

    def values(self) -> tuple[float, ...]:
        return (self.cider, self.meteor, self.rouge_l, self.bleu_1, self.bleu_2, self.bleu_3, self.bleu_4)

    def to_json(self) -> dict:
        return {
            "cider": self.cider,
            "meteor": self.meteor,
            "rouge_l": self.rouge_l,
            "bleu_1": self.bleu_1,
            "bleu_2": self.bleu_2,
            "bleu_3": self.bleu_3,
            "bleu_4": self.bleu_4,
            "items": self.items,
        }


def evaluate_corpus(candidates, references) -> MetricReport:
    """Score one corpus with every metric family (one table row)."""
    if not candidates:
        raise DataError("no candidates to evaluate")
    bleus = bleu(candidates, references)
    return MetricReport(
        cider=cider(candidates, references),
        meteor=meteor_exact(candidates, references),
        rouge_l=rouge_l(candidates, references),
        bleu_1=bleus[0],
        bleu_2=bleus[1],
        bleu_3=bleus[2],
        bleu_4=bleus[3],
        items=len(candidates),
    )


def render_table(report: MetricReport, label: str = "corpus") -> str:
    """Aligned text table with the standard column order."""
    width = 9
    header = f"{'':<16s}" + "".join(f"{c:>{width}s}" for c in TABLE_COLUMNS)
    row = f"{label:<16s}" + "".join(f"{v:>{width}.3f}" for v in report.values())
    return header + "\n" + row
