"""Constituency trees: parsing, serialization, and macro-tree assembly.

Trees arrive as bracketed strings, one per line, in the classic treebank
style::

    (S (NP (DT the) (NN cat)) (VP (VBD sat)))

A node is either internal (a label plus one or more children) or a leaf
(a surface token). Labels and tokens are kept verbatim: no unescaping of
``-LRB-``/``-RRB-``, no case mangling, no stripping of functional tags.
Multi-sentence questions are joined under a single artificial root so that
downstream tree kernels see one tree per question.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import DataError


class TreeParseError(DataError):
    """Raised for malformed bracketed trees; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class SyntaxTree:
    """An immutable ordered tree. A leaf is a node with no children.

    For internal nodes ``label`` is the nonterminal symbol; for leaves it is
    the surface token itself.
    """

    label: str
    children: tuple["SyntaxTree", ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.label:
            raise DataError("tree node label must be a non-empty string")

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list[str]:
        """Surface tokens in left-to-right order."""
        out: list[str] = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.label)
            else:
                stack.extend(reversed(node.children))
        return out

    def iter_nodes(self) -> Iterator["SyntaxTree"]:
        """All nodes in post-order (children before parents)."""
        stack: list[tuple[SyntaxTree, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded or node.is_leaf:
                yield node
            else:
                stack.append((node, True))
                for child in reversed(node.children):
                    stack.append((child, False))


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def parse_bracketed(text: str) -> SyntaxTree:
    """Parse one bracketed tree from ``text``.

    The whole string must be a single well-formed bracketed expression
    (surrounding whitespace is fine). Unbalanced parentheses, empty labels,
    childless groups and trailing garbage raise :class:`TreeParseError`
    naming the byte offset of the offending character.
    """
    n = len(text)
    i = 0

    def skip_ws(j: int) -> int:
        while j < n and text[j].isspace():
            j += 1
        return j

    def read_atom(j: int) -> tuple[str, int]:
        k = j
        while k < n and not text[k].isspace() and text[k] not in "()":
            k += 1
        return text[j:k], k

    def parse_node(j: int) -> tuple[SyntaxTree, int]:
        # invariant: text[j] == "("
        j = skip_ws(j + 1)
        label, j = read_atom(j)
        if not label:
            raise TreeParseError("empty node label", _byte_offset(text, j))
        children: list[SyntaxTree] = []
        while True:
            j = skip_ws(j)
            if j >= n:
                raise TreeParseError("unbalanced parentheses: missing ')'",
                                     _byte_offset(text, j))
            ch = text[j]
            if ch == ")":
                if not children:
                    raise TreeParseError("node has a label but no children",
                                         _byte_offset(text, j))
                return SyntaxTree(label, tuple(children)), j + 1
            if ch == "(":
                child, j = parse_node(j)
                children.append(child)
            else:
                token, j = read_atom(j)
                children.append(SyntaxTree(token))

    i = skip_ws(i)
    if i >= n or text[i] != "(":
        raise TreeParseError("expected '(' to open a tree", _byte_offset(text, i))
    tree, i = parse_node(i)
    i = skip_ws(i)
    if i != n:
        raise TreeParseError("trailing content after tree", _byte_offset(text, i))
    return tree


def to_bracketed(tree: SyntaxTree) -> str:
    """Serialize back to single-space bracketed form.

    ``parse_bracketed(to_bracketed(t)) == t`` for any tree whose root is
    internal. (A bare leaf serializes to its token alone, which is not
    itself a bracketed expression.)
    """
    if tree.is_leaf:
        return tree.label
    parts = " ".join(to_bracketed(c) for c in tree.children)
    return f"({tree.label} {parts})"


def macro_tree(trees: list[SyntaxTree], root_label: str = "ROOT") -> SyntaxTree:
    """Join per-sentence parses under one artificial root node.

    Questions frequently span several sentences; the kernels expect a single
    tree per question, so the sentence parses become the ordered children of
    a fresh ``root_label`` node. Raises :class:`DataError` on an empty list.
    """
    if not trees:
        raise DataError("macro_tree requires at least one sentence tree")
    return SyntaxTree(root_label, tuple(trees))


def node_count(tree: SyntaxTree) -> int:
    """Total number of nodes, leaves included."""
    return sum(1 for _ in tree.iter_nodes())


def read_tree_file(path: str | Path) -> list[SyntaxTree]:
    """Read a UTF-8 file with one bracketed tree per line.

    Blank lines are skipped; parse failures are re-raised with the line
    number prepended.
    """
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                trees.append(parse_bracketed(line))
            except TreeParseError as exc:
                raise TreeParseError(f"{path}:{lineno}: {exc.args[0]}",
                                     exc.offset) from exc
    return trees


def write_tree_file(path: str | Path, trees: list[SyntaxTree]) -> None:
    """Write trees one-per-line in bracketed form."""
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            fh.write(to_bracketed(tree))
            fh.write("\n")
