"""Relational linking between two question trees.

Given a pair of questions, the tree of one is enriched with respect to the
other: every phrase-level node (NP, VP, PP by default) whose yield shares
enough content words with the other question's text gets its label prefixed
with ``REL-``. The marked trees let a tree kernel reward matching structure
that is *about the same words* more than coincidental structural overlap.

The operation is asymmetric by design: linking x against y marks x only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError
from .treebank import SyntaxTree

REL_PREFIX = "REL-"

DEFAULT_PHRASE_LABELS = frozenset({"NP", "VP", "PP"})


@dataclass(frozen=True)
class RelConfig:
    """Knobs for the lexical-match linking.

    phrase_labels: node labels eligible for marking.
    min_shared_tokens: distinct matching tokens required to mark a node.
    case_insensitive: casefold tokens before comparing.
    stopwords: tokens ignored on both sides (compared casefolded when
        ``case_insensitive``).
    """

    phrase_labels: frozenset[str] = DEFAULT_PHRASE_LABELS
    min_shared_tokens: int = 1
    case_insensitive: bool = True
    stopwords: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.min_shared_tokens < 1:
            raise DataError("min_shared_tokens must be >= 1")


def _match_set(tokens: list[str], cfg: RelConfig) -> set[str]:
    if cfg.case_insensitive:
        tokens = [t.casefold() for t in tokens]
        stop = {s.casefold() for s in cfg.stopwords}
    else:
        stop = set(cfg.stopwords)
    return {t for t in tokens if t not in stop}


def rel_link(x: SyntaxTree, y: SyntaxTree, cfg: RelConfig = RelConfig()) -> SyntaxTree:
    """Return a copy of ``x`` with REL- prefixes on lexically linked phrases.

    A non-leaf node of ``x`` whose label is in ``cfg.phrase_labels`` is marked
    when its leaf yield shares at least ``cfg.min_shared_tokens`` distinct
    non-stopword tokens with the full yield of ``y``. ``x`` must not already
    contain REL- labels (re-linking an enriched tree would stack prefixes).
    """
    for node in x.iter_nodes():
        if not node.is_leaf and node.label.startswith(REL_PREFIX):
            raise DataError(
                f"tree already carries a {REL_PREFIX!r} label: {node.label!r}"
            )

    y_tokens = _match_set(y.leaves(), cfg)

    def rebuild(node: SyntaxTree) -> SyntaxTree:
        if node.is_leaf:
            return node
        children = tuple(rebuild(c) for c in node.children)
        label = node.label
        if label in cfg.phrase_labels:
            shared = _match_set(node.leaves(), cfg) & y_tokens
            if len(shared) >= cfg.min_shared_tokens:
                label = REL_PREFIX + label
        return SyntaxTree(label, children)

    return rebuild(x)
