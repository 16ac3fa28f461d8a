"""Brute-force reference implementations of the caption metrics.

Written independently of selftalk.metrics on purpose: naive loops and
exhaustive enumeration instead of shared helpers, so agreement between
the two is meaningful evidence. Only usable for short sentences.
"""

import itertools
import math


def _count(seq, gram):
    n = len(gram)
    return sum(1 for i in range(len(seq) - n + 1) if tuple(seq[i:i + n]) == gram)


def oracle_bleu(candidates, references, n_max=4):
    items = sorted(candidates)
    cand_total = 0
    ref_total = 0
    numer = [0] * n_max
    denom = [0] * n_max
    for item in items:
        cand = candidates[item]
        refs = references[item]
        cand_total += len(cand)
        closest = None
        for ref in refs:
            key = (abs(len(ref) - len(cand)), len(ref))
            if closest is None or key < closest:
                closest = key
        ref_total += closest[1]
        for n in range(1, n_max + 1):
            grams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
            for gram in set(grams):
                best_ref = max(_count(ref, gram) for ref in refs)
                numer[n - 1] += min(grams.count(gram), best_ref)
            denom[n - 1] += len(grams)
    if cand_total == 0:
        return [0.0] * n_max
    if cand_total > ref_total:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_total / cand_total)
    out = []
    for n in range(1, n_max + 1):
        product = 1.0
        for k in range(n):
            p = numer[k] / denom[k] if denom[k] else 0.0
            product *= p
        out.append(bp * product ** (1.0 / n) if product > 0 else 0.0)
    return out


def _is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(tok == other for other in it) for tok in sub)


def _brute_lcs(a, b):
    best = 0
    for mask in range(1 << len(a)):
        sub = [a[i] for i in range(len(a)) if mask >> i & 1]
        if len(sub) > best and _is_subsequence(sub, b):
            best = len(sub)
    return best


def oracle_rouge_l(candidates, references, beta=1.2):
    total = 0.0
    for item in sorted(candidates):
        cand = candidates[item]
        best = 0.0
        for ref in references[item]:
            if not cand or not ref:
                continue
            lcs = _brute_lcs(cand, ref)
            if lcs == 0:
                continue
            p = lcs / len(cand)
            r = lcs / len(ref)
            best = max(best, (1 + beta * beta) * p * r / (r + beta * beta * p))
        total += best
    return total / len(candidates)


def oracle_cider(candidates, references, n_max=4, sigma=6.0):
    items = sorted(candidates)
    big_n = len(items)

    def grams_of(seq, n):
        return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]

    all_grams = set()
    for item in items:
        for ref in references[item]:
            for n in range(1, n_max + 1):
                all_grams.update(grams_of(ref, n))
    df = {}
    for gram in all_grams:
        df[gram] = sum(
            1 for item in items
            if any(_count(ref, gram) > 0 for ref in references[item])
        )

    def weight(seq, gram):
        idf = math.log(big_n) - math.log(max(1.0, df.get(gram, 0)))
        return _count(seq, gram) * idf

    total = 0.0
    for item in items:
        cand = candidates[item]
        refs = references[item]
        item_sum = 0.0
        for n in range(1, n_max + 1):
            cand_grams = sorted(set(grams_of(cand, n)))
            cand_sq = sum(weight(cand, g) ** 2 for g in cand_grams)
            per_ref = 0.0
            for ref in refs:
                ref_grams = sorted(set(grams_of(ref, n)))
                ref_sq = sum(weight(ref, g) ** 2 for g in ref_grams)
                if cand_sq == 0 or ref_sq == 0:
                    continue
                dot = sum(weight(cand, g) * weight(ref, g) for g in cand_grams)
                cos = dot / (math.sqrt(cand_sq) * math.sqrt(ref_sq))
                penalty = math.exp(-((len(cand) - len(ref)) ** 2) / (2 * sigma * sigma))
                per_ref += cos * penalty
            item_sum += per_ref / len(refs)
        total += item_sum / n_max
    return total / big_n


def oracle_min_chunks(cand, ref, limit=2_000_000):
    """Minimal chunk count by enumerating every maximum alignment."""
    words = sorted(set(cand) & set(ref))
    per_word = []
    combos = 1
    for word in words:
        cpos = [i for i, t in enumerate(cand) if t == word]
        rpos = [j for j, t in enumerate(ref) if t == word]
        k = min(len(cpos), len(rpos))
        options = [
            tuple(zip(chosen, perm))
            for chosen in itertools.combinations(cpos, k)
            for perm in itertools.permutations(rpos, k)
        ]
        combos *= len(options)
        if combos > limit:
            raise RuntimeError("alignment enumeration too large for the oracle")
        per_word.append(options)
    if not per_word:
        return 0
    best = None
    for combo in itertools.product(*per_word):
        pairs = sorted(pair for group in combo for pair in group)
        chunks = 0
        prev = None
        for ci, rj in pairs:
            if prev is None or ci != prev[0] + 1 or rj != prev[1] + 1:
                chunks += 1
            prev = (ci, rj)
        if best is None or chunks < best:
            best = chunks
    return best


def oracle_meteor(candidates, references, alpha=0.9, beta=3.0, gamma=0.5):
    total = 0.0
    for item in sorted(candidates):
        cand = candidates[item]
        best = 0.0
        for ref in references[item]:
            matches = 0
            for word in set(cand):
                matches += min(cand.count(word), ref.count(word))
            if matches == 0:
                continue
            p = matches / len(cand)
            r = matches / len(ref)
            f_mean = p * r / (alpha * p + (1 - alpha) * r)
            chunks = oracle_min_chunks(cand, ref)
            score = f_mean * (1.0 - gamma * (chunks / matches) ** beta)
            best = max(best, score)
        total += best
    return total / len(candidates)


ORACLE_VOCAB = (
    "the", "a", "cat", "dog", "red", "cube", "on", "mat",
    "sat", "what", "is", "blue",
)


def random_corpus(rng, max_items=8, max_tokens=10, vocab=ORACLE_VOCAB, min_items=1):
    """Seeded random evaluation corpus; candidates may be empty."""
    n_items = int(rng.integers(min_items, max_items + 1))
    candidates = {}
    references = {}
    for k in range(n_items):
        item = f"item{k:02d}"
        cand_len = int(rng.integers(0, max_tokens + 1))
        candidates[item] = [vocab[int(rng.integers(len(vocab)))] for _ in range(cand_len)]
        refs = []
        for _ in range(int(rng.integers(1, 4))):
            ref_len = int(rng.integers(1, max_tokens + 1))
            refs.append([vocab[int(rng.integers(len(vocab)))] for _ in range(ref_len)])
        references[item] = refs
    return candidates, references
