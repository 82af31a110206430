"""Caption metrics: BLEU, ROUGE-L, CIDEr and subcategory tuple f-scores."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .scenes import Scene
from .vocab import SubcategoryLexicon

Tokens = Sequence[str]


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, references: Sequence[Tokens]) -> int:
    # ties go to the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in references)[1]


def _clipped_counts(candidate: Tokens, references: Sequence[Tokens], n: int) -> tuple[int, int]:
    cand = ngrams(candidate, n)
    max_ref: Counter = Counter()
    for ref in references:
        for gram, c in ngrams(ref, n).items():
            if c > max_ref[gram]:
                max_ref[gram] = c
    clipped = sum(min(c, max_ref[g]) for g, c in cand.items())
    return clipped, max(len(candidate) - n + 1, 0)


def _bleu_from_counts(clipped, totals, cand_len, ref_len, n) -> float:
    if cand_len == 0:
        return 0.0
    # orders longer than the candidate have no n-grams and are left out of the mean
    orders = [k for k in range(n) if totals[k] > 0]
    if any(clipped[k] == 0 for k in orders):
        return 0.0
    log_sum = sum(math.log(clipped[k] / totals[k]) for k in orders)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / len(orders))


def bleu_n(candidate: Tokens, references: Sequence[Tokens], n: int = 4) -> float:
    """Sentence BLEU-n: geometric mean of clipped 1..n-gram precisions times
    the brevity penalty against the closest reference length."""
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")
    if not references:
        raise ValueError("at least one reference is required")
    counts = [_clipped_counts(candidate, references, k) for k in range(1, n + 1)]
    return _bleu_from_counts(
        [c for c, _ in counts],
        [t for _, t in counts],
        len(candidate),
        _closest_ref_length(len(candidate), references),
        n,
    )


def corpus_bleu(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]], n: int = 4) -> float:
    """Corpus BLEU-n: n-gram matches and lengths are summed before the ratio."""
    if len(candidates) != len(references):
        raise ValueError("one reference set per candidate is required")
    clipped, totals = [0] * n, [0] * n
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, references):
        for k in range(1, n + 1):
            c, t = _clipped_counts(cand, refs, k)
            clipped[k - 1] += c
            totals[k - 1] += t
        cand_len += len(cand)
        ref_len += _closest_ref_length(len(cand), refs)
    return _bleu_from_counts(clipped, totals, cand_len, ref_len, n)


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, references: Sequence[Tokens], beta: float = 1.2) -> float:
    """LCS F-measure, best over references."""
    best = 0.0
    for ref in references:
        lcs = lcs_length(candidate, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(candidate), lcs / len(ref)
        f = (1 + beta**2) * p * r / (r + beta**2 * p)
        best = max(best, f)
    return best


def cider(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    n: int = 4,
) -> tuple[float, list[float]]:
    """Plain CIDEr (no length penalty, no clipping), scaled by 10.

    Document frequencies are counted over scenes' reference sets, floored
    at 1. Returns the corpus mean and the per-scene scores.
    """
    if len(candidates) != len(references):
        raise ValueError("one reference set per candidate is required")
    n_docs = len(references)
    df: list[Counter] = [Counter() for _ in range(n)]
    for refs in references:
        for k in range(n):
            df[k].update(set(g for ref in refs for g in ngrams(ref, k + 1)))
    log_docs = math.log(float(n_docs)) if n_docs else 0.0

    def vector(tokens: Tokens, k: int) -> dict:
        return {g: c * (log_docs - math.log(max(1.0, df[k][g]))) for g, c in ngrams(tokens, k + 1).items()}

    def cosine(u: dict, v: dict) -> float:
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0.0 or nv == 0.0:
            return 0.0
        return sum(x * v.get(g, 0.0) for g, x in u.items()) / (nu * nv)

    scores = []
    for cand, refs in zip(candidates, references):
        total = 0.0
        for k in range(n):
            cv = vector(cand, k)
            total += sum(cosine(cv, vector(ref, k)) for ref in refs) / len(refs)
        scores.append(10.0 * total / n)
    mean = sum(scores) / len(scores) if scores else 0.0
    return mean, scores


# -- subcategory tuples ------------------------------------------------
ATTRIBUTE_CATEGORIES = ("color", "count", "size")
RELATION_CATEGORIES = ("spatial", "semantic")
REPORT_CATEGORIES = ("object", "attribute", "relation", "color", "count", "size")


def extract_tuples(tokens: Tokens, lexicon: SubcategoryLexicon, window: int = 3) -> set:
    """Read ``(category, object, word)`` tuples off a caption.

    Color, count and size words attach to the first object within ``window``
    tokens after them; semantic words to an object at most two tokens before
    them; spatial words to the nearest preceding object.
    """
    objects = [lexicon.object_lemma(t) for t in tokens]
    found = set()
    for i, tok in enumerate(tokens):
        category = lexicon.category_of(tok)
        if category in ATTRIBUTE_CATEGORIES:
            for j in range(i + 1, min(len(tokens), i + window + 1)):
                if objects[j]:
                    found.add((category, objects[j], tok))
                    break
        elif category == "semantic":
            for j in range(i - 1, max(-1, i - 3), -1):
                if objects[j]:
                    found.add((category, objects[j], tok))
                    break
        elif category == "spatial":
            for j in range(i - 1, -1, -1):
                if objects[j]:
                    found.add((category, objects[j], tok))
                    break
    return found


def _category_sets(tuples: Iterable, objects: Iterable[str]) -> dict[str, set]:
    tuples = set(tuples)
    sets = {c: {t for t in tuples if t[0] == c} for c in (*ATTRIBUTE_CATEGORIES, *RELATION_CATEGORIES)}
    sets["object"] = {("object", o) for o in objects}
    sets["attribute"] = set().union(*(sets[c] for c in ATTRIBUTE_CATEGORIES))
    sets["relation"] = set().union(*(sets[c] for c in RELATION_CATEGORIES))
    return sets


def prf(tp: int, n_cand: int, n_ref: int) -> tuple[float, float, float]:
    """Precision, recall, F1; an empty side counts as perfect only against an empty side."""
    p = tp / n_cand if n_cand else (1.0 if n_ref == 0 else 0.0)
    r = tp / n_ref if n_ref else (1.0 if n_cand == 0 else 0.0)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def tuple_counts(
    candidate: Tokens,
    gt_tuples: Iterable,
    gt_objects: Iterable[str],
    lexicon: SubcategoryLexicon,
    window: int = 3,
) -> dict[str, tuple[int, int, int]]:
    """Per category ``(true positives, candidate tuples, reference tuples)``."""
    cand_objects = {o for o in (lexicon.object_lemma(t) for t in candidate) if o}
    cand = _category_sets(extract_tuples(candidate, lexicon, window), cand_objects)
    ref = _category_sets(gt_tuples, gt_objects)
    return {c: (len(cand[c] & ref[c]), len(cand[c]), len(ref[c])) for c in REPORT_CATEGORIES}


def subcategory_fscore(
    candidate: Tokens,
    gt_tuples: Iterable,
    lexicon: SubcategoryLexicon,
    gt_objects: Iterable[str] | None = None,
    window: int = 3,
) -> dict[str, dict[str, float]]:
    """Per-category precision/recall/f1 of one caption against annotations."""
    gt_tuples = set(gt_tuples)
    if gt_objects is None:
        gt_objects = {t[1] for t in gt_tuples}
    counts = tuple_counts(candidate, gt_tuples, gt_objects, lexicon, window)
    return {c: dict(zip(("precision", "recall", "f1"), prf(*counts[c]))) for c in REPORT_CATEGORIES}


def corpus_subcategory_fscore(
    candidates: Sequence[Tokens],
    scenes: Sequence[Scene],
    lexicon: SubcategoryLexicon,
    window: int = 3,
) -> dict[str, float]:
    """Micro-averaged f1 per category over a corpus."""
    totals = {c: [0, 0, 0] for c in REPORT_CATEGORIES}
    for cand, scene in zip(candidates, scenes):
        for c, counts in tuple_counts(cand, scene.gt_tuples, scene.gt_objects, lexicon, window).items():
            for i in range(3):
                totals[c][i] += counts[i]
    return {c: prf(*totals[c])[2] for c in REPORT_CATEGORIES}


@dataclass
class MetricReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    cider: float
    object: float
    attribute: float
    relation: float
    color: float
    count: float
    size: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        d = self.to_dict()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(d))
            writer.writerow([repr(v) for v in d.values()])


def evaluate_captions(
    candidates: Sequence[Tokens],
    scenes: Sequence[Scene],
    lexicon: SubcategoryLexicon,
    window: int = 3,
) -> MetricReport:
    refs = [scene.references for scene in scenes]
    bleus = [corpus_bleu(candidates, refs, n) for n in range(1, 5)]
    rouge = sum(rouge_l(c, r) for c, r in zip(candidates, refs)) / max(1, len(candidates))
    cider_mean, _ = cider(candidates, refs)
    f = corpus_subcategory_fscore(candidates, scenes, lexicon, window)
    return MetricReport(*bleus, rouge, cider_mean, **f)
