"""Caption-quality metrics, attack success rate, and the evaluation driver.

All metrics operate on token sequences (any hashable tokens).  BLEU is
corpus-level with pooled clipped n-gram counts; ROUGE-L and METEOR-lite are
per-pair scores averaged over the corpus; CIDEr builds its idf table from the
corpus of reference sets.  Under the poisoned-input condition the evaluation
driver strips the target phrase from outputs before quality scoring but
computes the attack success rate on the raw outputs.
"""

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from math import exp, log
from typing import Optional  # noqa: F401  (used in EvalReport annotation)

import numpy as np

from .errors import ContractViolation
from .model import DecodeConfig, greedy_decode
from .poison import contains_target, strip_target

BLEU_FLOOR = 1e-9
ROUGE_BETA = 1.2
MAX_NGRAM = 4


class EvalCondition(str, Enum):
    CLEAN_INPUT = "CLEAN_INPUT"
    POISONED_INPUT = "POISONED_INPUT"


@dataclass
class EvalReport:
    condition: EvalCondition
    b4: float
    meteor: float
    rouge_l: float
    cider: float
    asr: float
    vqa_score: Optional[float]
    n_samples: int


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates, reference_sets):
    """Corpus BLEU@4: pooled clipped precisions, floored at 1e-9, and a
    brevity penalty from the per-candidate closest reference length."""
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and reference sets differ in length")
    for refs in reference_sets:
        if len(refs) == 0:
            raise ContractViolation("empty reference set")
    correct = [0] * MAX_NGRAM
    guess = [0] * MAX_NGRAM
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, reference_sets):
        cand = tuple(cand)
        cand_len += len(cand)
        # closest reference length; ties prefer the shorter reference
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, MAX_NGRAM + 1):
            counts = _ngrams(cand, n)
            if not counts:
                continue
            max_ref = Counter()
            for r in refs:
                for gram, c in _ngrams(tuple(r), n).items():
                    max_ref[gram] = max(max_ref[gram], c)
            guess[n - 1] += max(0, len(cand) - n + 1)
            correct[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
    if cand_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(MAX_NGRAM):
        p = correct[n] / guess[n] if guess[n] > 0 else 0.0
        log_p += log(max(p, BLEU_FLOOR))
    bp = 1.0 if cand_len > ref_len else exp(1.0 - ref_len / cand_len)
    return bp * exp(log_p / MAX_NGRAM)


def _lcs_len(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_pair(candidate, references):
    """Max over references of the LCS F-score with beta = 1.2."""
    if len(references) == 0:
        raise ContractViolation("empty reference set")
    candidate = tuple(candidate)
    if len(candidate) == 0:
        return 0.0
    best = 0.0
    b2 = ROUGE_BETA**2
    for ref in references:
        ref = tuple(ref)
        if len(ref) == 0:
            continue
        lcs = _lcs_len(candidate, ref)
        if lcs == 0:
            continue
        p = lcs / len(candidate)
        r = lcs / len(ref)
        best = max(best, (1 + b2) * p * r / (r + b2 * p))
    return best


def rouge_l(candidates, reference_sets):
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and reference sets differ in length")
    return float(np.mean([
        rouge_l_pair(c, rs) for c, rs in zip(candidates, reference_sets)
    ]))


def _min_chunks(candidate, reference, matches):
    """Fewest chunks over all maximal exact-unigram alignments.

    A chunk is a maximal run of matched pairs contiguous and in order in both
    sequences.  Depth-first search over which reference occurrence each
    matched candidate token aligns to, with branch-and-bound on chunk count.
    """
    counts_r = Counter(reference)
    counts_c = Counter(candidate)
    quota = {w: min(counts_c[w], counts_r[w]) for w in counts_c if w in counts_r}
    positions = {w: [j for j, y in enumerate(reference) if y == w] for w in quota}
    best = [matches]  # one chunk per matched pair is always achievable

    def dfs(i, remaining, used, last_i, last_j, chunks):
        if chunks >= best[0]:
            return
        if sum(remaining.values()) == 0:
            best[0] = chunks
            return
        # advance past candidate tokens that cannot be matched
        while i < len(candidate) and remaining.get(candidate[i], 0) == 0:
            i += 1
        if i >= len(candidate):
            return
        w = candidate[i]
        left = sum(1 for x in candidate[i + 1 :] if x == w)
        for j in positions[w]:
            if j in used:
                continue
            # a chunk continues only when adjacent in both sequences
            cost = 0 if (i == last_i + 1 and j == last_j + 1) else 1
            remaining[w] -= 1
            used.add(j)
            dfs(i + 1, remaining, used, i, j, chunks + cost)
            used.discard(j)
            remaining[w] += 1
        if left >= remaining[w]:  # this occurrence may go unmatched
            dfs(i + 1, remaining, used, last_i, last_j, chunks)

    dfs(0, dict(quota), set(), -2, -2, 0)
    return best[0]


def meteor_lite_pair(candidate, references):
    """Exact-unigram METEOR: F_mean = 10PR/(R+9P), chunk penalty
    0.5*(chunks/matches)^3, max over references, 0 without matches."""
    candidate = tuple(candidate)
    best = 0.0
    for ref in references:
        ref = tuple(ref)
        overlap = Counter(candidate) & Counter(ref)
        m = sum(overlap.values())
        if m == 0 or len(candidate) == 0 or len(ref) == 0:
            continue
        p = m / len(candidate)
        r = m / len(ref)
        f_mean = 10.0 * p * r / (r + 9.0 * p)
        chunks = _min_chunks(candidate, ref, m)
        penalty = 0.5 * (chunks / m) ** 3
        best = max(best, f_mean * (1.0 - penalty))
    return best


def meteor_lite(candidates, reference_sets):
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and reference sets differ in length")
    return float(np.mean([
        meteor_lite_pair(c, rs) for c, rs in zip(candidates, reference_sets)
    ]))


def cider(candidates, reference_sets):
    """Corpus CIDEr in [0, 10]: tf-idf cosine per n-gram order, candidate
    counts clipped to the reference maxima, averaged over orders and
    references, scaled by 10."""
    if len(candidates) != len(reference_sets):
        raise ContractViolation("candidates and reference sets differ in length")
    m = len(reference_sets)
    if m < 2:
        raise ContractViolation("CIDEr idf needs at least 2 reference sets")
    df = [Counter() for _ in range(MAX_NGRAM)]
    for refs in reference_sets:
        for n in range(1, MAX_NGRAM + 1):
            seen = set()
            for ref in refs:
                seen.update(_ngrams(tuple(ref), n).keys())
            for gram in seen:
                df[n - 1][gram] += 1

    def idf(n, gram):
        return log(m / max(df[n - 1][gram], 1))

    def tfidf(tokens, n):
        return {g: c * idf(n, g) for g, c in _ngrams(tuple(tokens), n).items()}

    scores = []
    for cand, refs in zip(candidates, reference_sets):
        per_ref = []
        cand_vecs = [tfidf(cand, n) for n in range(1, MAX_NGRAM + 1)]
        for ref in refs:
            sims = []
            for n in range(1, MAX_NGRAM + 1):
                cv = cand_vecs[n - 1]
                rv = tfidf(ref, n)
                c_norm = np.sqrt(sum(v * v for v in cv.values()))
                r_norm = np.sqrt(sum(v * v for v in rv.values()))
                if c_norm == 0.0 or r_norm == 0.0:
                    sims.append(0.0)
                    continue
                num = sum(min(cv[g], rv[g]) * rv[g] for g in cv if g in rv)
                sims.append(num / (c_norm * r_norm))
            per_ref.append(float(np.mean(sims)))
        scores.append(10.0 * float(np.mean(per_ref)))
    return float(np.mean(scores))


def asr(generated, target):
    """Fraction of outputs containing the target phrase contiguously."""
    if len(generated) == 0:
        raise ContractViolation("empty output list")
    return sum(contains_target(g, target) for g in generated) / len(generated)


def vqa_score_pair(generated, reference_answers):
    """min(#exactly-matching references / 3, 1), the VQA convention."""
    if len(reference_answers) == 0:
        raise ContractViolation("empty reference answers")
    generated = tuple(generated)
    hits = sum(tuple(r) == generated for r in reference_answers)
    return min(hits / 3.0, 1.0)


def vqa_score(generated_list, reference_answer_sets):
    return float(np.mean([
        vqa_score_pair(g, rs)
        for g, rs in zip(generated_list, reference_answer_sets)
    ]))


def evaluate_model(params, eval_corpus, target, condition,
                   decode_cfg=DecodeConfig()):
    """Greedy-decode every sample and score against the corpus references.

    ASR is computed on raw outputs.  Under POISONED_INPUT the target phrase
    is stripped from outputs before the quality metrics (never under
    CLEAN_INPUT), and quality is judged against the references carried by the
    corpus, which for a triggered evaluation corpus are the clean captions.
    """
    condition = EvalCondition(condition)
    outputs = [
        greedy_decode(params, s.image, s.prompt, decode_cfg)
        for s in eval_corpus
    ]
    raw_asr = asr(outputs, target)
    if condition == EvalCondition.POISONED_INPUT:
        scored = [strip_target(o, target) for o in outputs]
    else:
        scored = outputs
    refs = [s.references for s in eval_corpus]
    return EvalReport(
        condition=condition,
        b4=bleu4(scored, refs),
        meteor=meteor_lite(scored, refs),
        rouge_l=rouge_l(scored, refs),
        cider=cider(scored, refs),
        asr=raw_asr,
        vqa_score=None,
        n_samples=len(eval_corpus.samples),
    )
