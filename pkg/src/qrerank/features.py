"""Dense features for question pairs.

Five families:

* 20 text similarities — {GST, LCS, Jaccard, containment, cosine} computed
  over word n-grams for n = 1..4 of the two question texts (case-folded,
  stopwords removed).
* one tree-pair similarity scalar — the normalized partial-tree kernel
  between the two REL-linked macro-trees of the same example.
* the search-engine rank of the candidate, as-is or inverted.
* the concatenation of the two questions' embedding vectors.
* seven MT-evaluation measures comparing a question against a comment:
  sentence BLEU, a no-shift TER, an exact-match METEOR variant, NIST,
  unigram precision/recall, and length ratio.

All functions are pure; extraction across examples is embarrassingly
parallel.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .kernels import KernelConfig, normalize_kernel, ptk
from .treebank import SyntaxTree

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

SIM_MEASURES = ("gst", "lcs", "jaccard", "containment", "cosine")
SIM_NGRAM_ORDERS = (1, 2, 3, 4)

MTE_NAMES = ("mte_bleu", "mte_ter_noshift", "mte_meteor_lite", "mte_nist",
             "mte_precision", "mte_recall", "mte_length_ratio")

RANK_MODES = ("AS_IS", "INVERSE")


@dataclass(frozen=True)
class TokenSeq:
    """An ordered, immutable token sequence. Tokens are never empty strings."""

    tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if any(not t for t in self.tokens):
            raise DataError("TokenSeq tokens must be non-empty strings")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


@dataclass(frozen=True)
class FeatureVector:
    """Parallel (values, names) pair for one feature block."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise DataError("feature values must form a 1-d vector")
        if len(values) != len(self.names):
            raise DataError("feature values and names differ in length")
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")

    def __len__(self):
        return len(self.names)


def concat_features(*blocks: FeatureVector) -> FeatureVector:
    """Concatenate feature blocks, keeping names aligned with values."""
    if not blocks:
        return FeatureVector(np.zeros(0), ())
    values = np.concatenate([b.values for b in blocks])
    names = tuple(n for b in blocks for n in b.names)
    return FeatureVector(values, names)


@dataclass(frozen=True)
class FeatureConfig:
    """Text-preprocessing knobs shared by the similarity features."""

    stopwords: frozenset[str] = field(default_factory=frozenset)
    gst_min_match: int = 1

    def __post_init__(self):
        if self.gst_min_match < 1:
            raise DataError("gst_min_match must be >= 1")


# ---------------------------------------------------------------------------
# tokenization and n-grams
# ---------------------------------------------------------------------------

def tokenize(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> TokenSeq:
    """Unicode-aware word tokenization: runs of letters/digits, case-folded,
    with stopwords removed. Deterministic; empty text gives an empty sequence.
    """
    stop = {s.casefold() for s in stopwords}
    tokens = tuple(
        t for t in (m.group().casefold() for m in _WORD_RE.finditer(text))
        if t not in stop
    )
    return TokenSeq(tokens)


def ngrams(seq: TokenSeq, n: int) -> Counter:
    """Multiset of contiguous n-token windows (empty when the sequence is
    shorter than n)."""
    if n < 1:
        raise DataError(f"n-gram order must be >= 1, got {n}")
    toks = tuple(seq)
    return Counter(toks[i:i + n] for i in range(len(toks) - n + 1))


# ---------------------------------------------------------------------------
# similarity measures
# ---------------------------------------------------------------------------

def jaccard(A: set, B: set) -> float:
    """|A∩B| / |A∪B|, with 0 for two empty sets."""
    if not A and not B:
        return 0.0
    return len(A & B) / len(A | B)


def containment(A: set, B: set) -> float:
    """|A∩B| / |A| — how much of A (the original-question side) B covers."""
    if not A:
        return 0.0
    return len(A & B) / len(A)


def cosine(A: Counter, B: Counter) -> float:
    """Cosine of the two count vectors; 0 if either is empty."""
    if not A or not B:
        return 0.0
    dot = sum(c * B[g] for g, c in A.items())
    norm_a = math.sqrt(sum(c * c for c in A.values()))
    norm_b = math.sqrt(sum(c * c for c in B.values()))
    return dot / (norm_a * norm_b)


def lcs_sim(a, b) -> float:
    """Longest-common-subsequence length over max(len_a, len_b).

    Works on any hashable-element sequences (token sequences or n-gram
    sequences). Returns 0 when either side is empty.
    """
    a, b = list(a), list(b)
    if not a or not b:
        return 0.0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1] / max(len(a), len(b))


def _gst_tiled_length(a, b, min_match):
    """Greedy string tiling: repeatedly take the longest common run of
    unmarked elements (length >= min_match), marking every non-overlapping
    occurrence of that length per round. Returns the total tiled length."""
    marked_a = [False] * len(a)
    marked_b = [False] * len(b)
    tiled = 0
    while True:
        best = 0
        ends = []
        # L[j] = length of the common unmarked suffix ending at (i, j)
        prev = [0] * (len(b) + 1)
        for i in range(1, len(a) + 1):
            cur = [0] * (len(b) + 1)
            if not marked_a[i - 1]:
                x = a[i - 1]
                for j in range(1, len(b) + 1):
                    if not marked_b[j - 1] and b[j - 1] == x:
                        run = prev[j - 1] + 1
                        cur[j] = run
                        if run > best:
                            best = run
                            ends = [(i, j)]
                        elif run == best:
                            ends.append((i, j))
            prev = cur
        if best < min_match:
            break
        for i, j in ends:
            si, sj = i - best, j - best
            if any(marked_a[si:i]) or any(marked_b[sj:j]):
                continue
            for k in range(best):
                marked_a[si + k] = True
                marked_b[sj + k] = True
            tiled += best
    return tiled


def gst_sim(a, b, min_match: int = 1) -> float:
    """Greedy-string-tiling similarity: 2·tiled / (len_a + len_b)."""
    if min_match < 1:
        raise DataError(f"min_match must be >= 1, got {min_match}")
    a, b = list(a), list(b)
    if not a or not b:
        return 0.0
    return 2.0 * _gst_tiled_length(a, b, min_match) / (len(a) + len(b))


def similarity_vector(qo_text: str, qs_text: str,
                      cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """The 20 text similarities between the two questions.

    For every n in 1..4 the texts are mapped to their n-gram representations
    and each of GST, LCS, Jaccard, containment and cosine is computed; the
    result is ordered n-major / measure-minor with names like
    ``sim_n2_jaccard``. Containment is directed from the first (original
    question) argument.
    """
    a = tokenize(qo_text, cfg.stopwords)
    b = tokenize(qs_text, cfg.stopwords)
    values = []
    names = []
    for n in SIM_NGRAM_ORDERS:
        counts_a = ngrams(a, n)
        counts_b = ngrams(b, n)
        toks_a = tuple(a)
        toks_b = tuple(b)
        seq_a = [toks_a[i:i + n] for i in range(len(toks_a) - n + 1)]
        seq_b = [toks_b[i:i + n] for i in range(len(toks_b) - n + 1)]
        per_measure = {
            "gst": gst_sim(seq_a, seq_b, cfg.gst_min_match),
            "lcs": lcs_sim(seq_a, seq_b),
            "jaccard": jaccard(set(counts_a), set(counts_b)),
            "containment": containment(set(counts_a), set(counts_b)),
            "cosine": cosine(counts_a, counts_b),
        }
        for measure in SIM_MEASURES:
            values.append(per_measure[measure])
            names.append(f"sim_n{n}_{measure}")
    return FeatureVector(np.array(values), tuple(names))


# ---------------------------------------------------------------------------
# tree, rank, and embedding features
# ---------------------------------------------------------------------------

def ptk_feature(tree_o_rel: SyntaxTree, tree_s_rel: SyntaxTree,
                cfg: KernelConfig) -> float:
    """Normalized partial-tree kernel between the two REL-linked trees of
    one example — structural similarity of the pair as a single scalar."""
    if tree_o_rel is None or tree_s_rel is None:
        raise DataError("ptk_feature requires both REL-linked trees")
    k_oo = ptk(tree_o_rel, tree_o_rel, cfg.lam, cfg.mu)
    k_ss = ptk(tree_s_rel, tree_s_rel, cfg.lam, cfg.mu)
    k_os = ptk(tree_o_rel, tree_s_rel, cfg.lam, cfg.mu)
    return normalize_kernel(k_os, k_oo, k_ss)


def rank_feature(pos: int, mode: str) -> float:
    """The candidate's search rank, verbatim (AS_IS) or inverted (INVERSE)."""
    if mode not in RANK_MODES:
        raise DataError(f"rank mode must be one of {RANK_MODES}, got {mode!r}")
    if pos < 1:
        raise DataError(f"rank position must be >= 1, got {pos}")
    return float(pos) if mode == "AS_IS" else 1.0 / pos


def embedding_pair(v_new: np.ndarray, v_forum: np.ndarray) -> np.ndarray:
    """Concatenate the new-question and forum-question embeddings."""
    if v_new is None or v_forum is None:
        raise DataError("embedding_pair requires both vectors")
    v_new = np.asarray(v_new, dtype=np.float64)
    v_forum = np.asarray(v_forum, dtype=np.float64)
    if v_new.ndim != 1 or v_forum.ndim != 1 or v_new.shape != v_forum.shape:
        raise DataError(
            f"embedding dimensions disagree: {v_new.shape} vs {v_forum.shape}"
        )
    return np.concatenate([v_new, v_forum])


# ---------------------------------------------------------------------------
# MT-evaluation features
# ---------------------------------------------------------------------------

def _clipped_matches(cand_counts: Counter, ref_counts: Counter) -> int:
    return sum(min(c, ref_counts[g]) for g, c in cand_counts.items())


def _sentence_bleu(cand, ref) -> float:
    """Sentence BLEU over 1..4-grams.

    The unigram precision is used raw (zero overlap means BLEU 0); higher
    orders get add-one smoothing on both numerator and denominator so short
    sentences do not zero the score. Brevity penalty exp(1 − ref/cand) when
    the candidate is shorter.
    """
    if not cand:
        return 0.0
    c1 = Counter(tuple(cand[i:i + 1]) for i in range(len(cand)))
    r1 = Counter(tuple(ref[i:i + 1]) for i in range(len(ref)))
    m1 = _clipped_matches(c1, r1)
    if m1 == 0:
        return 0.0
    log_sum = math.log(m1 / len(cand))
    for n in range(2, 5):
        cn = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        rn = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        total = sum(cn.values())
        matched = _clipped_matches(cn, rn)
        log_sum += math.log((matched + 1) / (total + 1))
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * math.exp(log_sum / 4.0)


def _edit_distance(a, b) -> int:
    """Word-level Levenshtein distance (insert/delete/substitute, unit costs)."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (0 if x == y else 1))
        prev = cur
    return prev[-1]


def _ter_noshift(cand, ref) -> float:
    """Edit distance over reference length, capped at 1. No block shifts:
    the full metric's shift search is heuristic, and this stays a simple,
    reproducible signal."""
    return min(1.0, _edit_distance(cand, ref) / len(ref))


def _greedy_alignment(cand, ref):
    """In-order exact-match alignment: each candidate token takes the
    reference position continuing the current run when possible, otherwise
    the leftmost unused occurrence. Returns (cand_pos, ref_pos) pairs."""
    positions = {}
    for j, tok in enumerate(ref):
        positions.setdefault(tok, []).append(j)
    used = set()
    pairs = []
    prev_ref = None
    for i, tok in enumerate(cand):
        options = [j for j in positions.get(tok, ()) if j not in used]
        if not options:
            prev_ref = None
            continue
        if prev_ref is not None and prev_ref + 1 in options:
            j = prev_ref + 1
        else:
            j = options[0]
        used.add(j)
        pairs.append((i, j))
        prev_ref = j
    return pairs


def _meteor_lite(cand, ref) -> float:
    """Exact-unigram METEOR: Fmean 10PR/(R+9P) times the fragmentation
    penalty 1 − 0.5·(chunks/matches)³. Zero when nothing aligns."""
    pairs = _greedy_alignment(cand, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    chunks = 1
    for (ci, rj), (pi, pj) in zip(pairs[1:], pairs):
        if ci != pi + 1 or rj != pj + 1:
            chunks += 1
    return fmean * (1.0 - 0.5 * (chunks / matches) ** 3)


_NIST_BETA = math.log(0.5) / math.log(2.0 / 3.0) ** 2


def _nist(cand, ref) -> float:
    """NIST over 1..5-grams with information weights taken from this pair's
    own reference: info(g) = log2(count_ref(prefix(g)) / count_ref(g))."""
    if not cand or not ref:
        return 0.0
    ref_counts = {
        n: Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        for n in range(1, 6)
    }
    score = 0.0
    for n in range(1, 6):
        cn = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        total = sum(cn.values())
        if total == 0:
            break
        rn = ref_counts[n]
        info_sum = 0.0
        for g, c in cn.items():
            matched = min(c, rn[g])
            if matched == 0:
                continue
            if n == 1:
                info = math.log2(len(ref) / rn[g])
            else:
                info = math.log2(ref_counts[n - 1][g[:-1]] / rn[g])
            info_sum += matched * info
        score += info_sum / total
    if len(cand) >= len(ref):
        bp = 1.0
    else:
        bp = math.exp(_NIST_BETA * math.log(len(cand) / len(ref)) ** 2)
    return score * bp


def mte_vector(question: TokenSeq, comment: TokenSeq) -> FeatureVector:
    """The seven MT-evaluation features of a (question, comment) pair.

    The question plays the candidate-translation role and the comment the
    reference. Both sequences should be tokenized WITHOUT stopword removal.
    An empty comment leaves the length ratio with a zero denominator and is
    rejected.
    """
    cand = list(question)
    ref = list(comment)
    if not ref:
        raise DataError("mte_vector: empty comment (length ratio denominator)")
    c1 = Counter(cand)
    r1 = Counter(ref)
    matches = sum(min(c, r1[g]) for g, c in c1.items())
    precision = matches / len(cand) if cand else 0.0
    recall = matches / len(ref)
    values = np.array([
        _sentence_bleu(cand, ref),
        _ter_noshift(cand, ref),
        _meteor_lite(cand, ref),
        _nist(cand, ref),
        precision,
        recall,
        len(cand) / len(ref),
    ])
    return FeatureVector(values, MTE_NAMES)


# ---------------------------------------------------------------------------
# external inputs: stopword and embedding files
# ---------------------------------------------------------------------------

def load_stopwords(path: str | Path) -> frozenset[str]:
    """One token per line, UTF-8; case-folded. Blank lines are ignored."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word:
                out.add(word.casefold())
    return frozenset(out)


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Embedding table: one ``id<TAB>v1 v2 … vd`` record per line.

    All vectors must share one dimension; duplicate ids and malformed
    numbers are rejected with their line number.
    """
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected 'id<TAB>values'")
            ident, _, rest = line.rstrip("\n").partition("\t")
            if not ident:
                raise DataError(f"{path}:{lineno}: empty embedding id")
            if ident in table:
                raise DataError(f"{path}:{lineno}: duplicate embedding id {ident!r}")
            try:
                vec = np.array([float(x) for x in rest.split()], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad number in embedding") from exc
            if vec.size == 0:
                raise DataError(f"{path}:{lineno}: empty embedding vector")
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite embedding value")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataError(
                    f"{path}:{lineno}: embedding dimension {vec.size} != {dim}"
                )
            table[ident] = vec
    if not table:
        raise DataError(f"{path}: empty embedding file")
    return table
