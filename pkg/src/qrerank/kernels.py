"""Tree kernels, vector kernels, and Gram-matrix assembly.

Two tree kernels are provided:

* ``stk`` — the subset-tree kernel: counts shared fragments in which every
  included node keeps its complete production (all children), decayed by λ
  per production.
* ``ptk`` — the partial-tree kernel: also admits fragments that keep any
  ordered subsequence of a node's children, with gap decay λ and per-level
  decay μ. Child sequences are compared with the standard string-subsequence
  dynamic program (cubic in the child-list length per node pair).

Both are computed bottom-up over post-order node lists with per-pair
memoization; node pairs that cannot match (different label / production) are
pruned by bucketing before the double loop. Evaluations are pure functions —
no state is shared between calls, so independent Gram cells can safely be
computed concurrently.

On top of the tree kernels sits the example-pair kernel used for training:
an RBF (or linear) kernel on the dense feature vector, the two-way tree
kernel on the REL-linked tree pair, and a linear or RBF kernel on the rank
feature, summed per the enabled blocks.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .treebank import SyntaxTree

TK_KINDS = ("STK", "PTK")
VECTOR_KERNELS = ("LINEAR", "RBF")


@dataclass(frozen=True)
class KernelConfig:
    """Hyperparameters and block switches for the example-pair kernel.

    lam (λ): decay per production (STK) / gap decay (PTK), in (0, 1].
    mu (μ): PTK per-level decay, in (0, 1].
    gamma (γ): RBF width; ``None`` means 1/dim of the block the RBF applies
        to, resolved at evaluation time.
    tk_kind: which tree kernel the pair kernel uses.
    rank_kernel / vec_kernel: LINEAR or RBF for the rank feature and the
        dense feature vector respectively.
    normalize_tk: normalize each tree-kernel summand by its self-kernels.
    use_sim / use_tk / use_rank: which blocks the combined kernel sums.
    """

    tk_kind: str = "PTK"
    lam: float = 0.4
    mu: float = 0.4
    gamma: float | None = None
    rank_kernel: str = "LINEAR"
    vec_kernel: str = "RBF"
    normalize_tk: bool = True
    use_sim: bool = True
    use_tk: bool = False
    use_rank: bool = False

    def __post_init__(self):
        if self.tk_kind not in TK_KINDS:
            raise DataError(f"tk_kind must be one of {TK_KINDS}, got {self.tk_kind!r}")
        if self.rank_kernel not in VECTOR_KERNELS:
            raise DataError(f"rank_kernel must be one of {VECTOR_KERNELS}")
        if self.vec_kernel not in VECTOR_KERNELS:
            raise DataError(f"vec_kernel must be one of {VECTOR_KERNELS}")
        if not 0.0 < self.lam <= 1.0:
            raise DataError(f"lambda must be in (0, 1], got {self.lam}")
        if not 0.0 < self.mu <= 1.0:
            raise DataError(f"mu must be in (0, 1], got {self.mu}")
        if self.gamma is not None and not self.gamma > 0:
            raise DataError(f"gamma must be positive, got {self.gamma}")
        if not (self.use_sim or self.use_tk or self.use_rank):
            raise DataError("at least one of use_sim, use_tk, use_rank must be true")


@dataclass
class Example:
    """One (original question, candidate) pair, featurized for the kernel.

    vec holds the dense feature block (similarities and, when enabled, the
    tree-pair similarity scalar, embeddings, and MT-evaluation features);
    tree_first / tree_second are the two REL-linked macro-trees (each side
    marked with respect to the other); rank_value is the transformed search
    rank. Blocks a configuration does not use may be None.
    """

    query_id: str
    candidate_id: str
    label: int
    original_rank: int
    vec: np.ndarray | None = None
    vec_names: tuple[str, ...] = ()
    rank_value: float | None = None
    tree_first: SyntaxTree | None = None
    tree_second: SyntaxTree | None = None

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise DataError(f"example label must be +1 or -1, got {self.label!r}")
        if self.original_rank < 1:
            raise DataError(f"original_rank must be >= 1, got {self.original_rank}")
        if self.vec is not None:
            self.vec = np.asarray(self.vec, dtype=np.float64)
            if self.vec.ndim != 1:
                raise DataError("example vec must be a 1-d array")
            if not np.all(np.isfinite(self.vec)):
                raise DataError("example vec contains non-finite values")
            if self.vec_names and len(self.vec_names) != len(self.vec):
                raise DataError("vec_names length does not match vec")
        if self.rank_value is not None and not math.isfinite(self.rank_value):
            raise DataError("rank_value must be finite")


# ---------------------------------------------------------------------------
# tree kernels
# ---------------------------------------------------------------------------

def _postorder_index(tree: SyntaxTree):
    nodes = list(tree.iter_nodes())
    return nodes, {id(n): i for i, n in enumerate(nodes)}


def stk(t1: SyntaxTree, t2: SyntaxTree, lam: float = 0.4) -> float:
    """Subset-tree kernel between two trees.

    K = Σ_{n1∈t1, n2∈t2} Δ(n1, n2) where Δ is 0 unless the productions at
    n1 and n2 are identical, and otherwise λ·∏_j (1 + Δ(child_j, child_j)).
    Leaf children contribute a bare factor 1, so a matching preterminal pair
    scores exactly λ. Symmetric in its tree arguments (bit-for-bit: the
    child products run in the same positional order either way, and the
    final reduction is an exactly rounded sum).
    """
    if not 0.0 < lam <= 1.0:
        raise DataError(f"lambda must be in (0, 1], got {lam}")
    nodes1, idx1 = _postorder_index(t1)
    nodes2, idx2 = _postorder_index(t2)

    def production(node):
        return (node.label, tuple(c.label for c in node.children))

    buckets = defaultdict(list)
    for i2, n2 in enumerate(nodes2):
        if n2.children:
            buckets[production(n2)].append((i2, n2))

    delta: dict[tuple[int, int], float] = {}
    terms = []
    for i1, n1 in enumerate(nodes1):
        if not n1.children:
            continue
        for i2, n2 in buckets.get(production(n1), ()):
            d = lam
            for c1, c2 in zip(n1.children, n2.children):
                d *= 1.0 + delta.get((idx1[id(c1)], idx2[id(c2)]), 0.0)
            delta[(i1, i2)] = d
            terms.append(d)
    return math.fsum(terms)


def _child_sequence_sum(a, b, lam, delta, idx1, idx2):
    """Σ over pairs of equal-length nonempty child subsequences of
    λ^{span(J1)+span(J2)} · ∏ Δ(paired children), via the subsequence-kernel
    dynamic program. ``a`` and ``b`` are child tuples of the two nodes."""
    n, m = len(a), len(b)
    lam2 = lam * lam
    D = [[delta.get((idx1[id(a[i])], idx2[id(b[j])]), 0.0) for j in range(m)]
         for i in range(n)]
    # dps holds DPS_p: the sum over subsequence pairs of length p that END
    # exactly at positions (i, j), weighted by full spans.
    dps = [[lam2 * D[i][j] for j in range(m)] for i in range(n)]
    terms = [v for row in dps for v in row]
    for p in range(2, min(n, m) + 1):
        # M accumulates dps with geometric tails: M[i][j] = Σ_{i'≤i, j'≤j}
        # λ^{i-i'} λ^{j-j'} dps[i'][j']   (computed with a symmetric grouping
        # so that transposing the arguments transposes M exactly)
        M = [[0.0] * m for _ in range(n)]
        for i in range(n):
            for j in range(m):
                up = M[i - 1][j] if i else 0.0
                left = M[i][j - 1] if j else 0.0
                diag = M[i - 1][j - 1] if i and j else 0.0
                M[i][j] = dps[i][j] + lam * (up + left) - lam2 * diag
        nxt = [[0.0] * m for _ in range(n)]
        alive = False
        for i in range(1, n):
            for j in range(1, m):
                if D[i][j] != 0.0 and M[i - 1][j - 1] != 0.0:
                    v = D[i][j] * (lam2 * M[i - 1][j - 1])
                    nxt[i][j] = v
                    terms.append(v)
                    alive = True
        if not alive:
            break
        dps = nxt
    return math.fsum(terms)


def ptk(t1: SyntaxTree, t2: SyntaxTree, lam: float = 0.4, mu: float = 0.4) -> float:
    """Partial-tree kernel between two trees.

    K = Σ_{n1,n2} Δ(n1, n2); Δ = 0 when labels differ, otherwise
    μ·(λ² + Σ_{J1,J2} λ^{d(J1)+d(J2)} ∏_i Δ(c_{J1,i}, c_{J2,i})) over pairs
    of equal-length nonempty child subsequences, d(J) being the span from
    first to last selected index. No cap on subsequence length. Symmetric.
    """
    if not 0.0 < lam <= 1.0:
        raise DataError(f"lambda must be in (0, 1], got {lam}")
    if not 0.0 < mu <= 1.0:
        raise DataError(f"mu must be in (0, 1], got {mu}")
    nodes1, idx1 = _postorder_index(t1)
    nodes2, idx2 = _postorder_index(t2)

    buckets = defaultdict(list)
    for i2, n2 in enumerate(nodes2):
        buckets[n2.label].append((i2, n2))

    mu_lam2 = mu * lam * lam
    delta: dict[tuple[int, int], float] = {}
    terms = []
    for i1, n1 in enumerate(nodes1):
        for i2, n2 in buckets.get(n1.label, ()):
            if n1.children and n2.children:
                s = _child_sequence_sum(n1.children, n2.children, lam,
                                        delta, idx1, idx2)
                d = mu * (lam * lam + s)
            else:
                d = mu_lam2
            delta[(i1, i2)] = d
            terms.append(d)
    return math.fsum(terms)


def normalize_kernel(k_xy: float, k_xx: float, k_yy: float) -> float:
    """Cosine-style normalization k_xy / sqrt(k_xx · k_yy)."""
    if k_xx <= 0.0 or k_yy <= 0.0:
        raise NumericalError(
            f"degenerate self-kernel (k_xx={k_xx}, k_yy={k_yy}): "
            "cannot normalize"
        )
    return k_xy / math.sqrt(k_xx * k_yy)


def _tree_kernel(t1, t2, cfg: KernelConfig) -> float:
    if cfg.tk_kind == "STK":
        return stk(t1, t2, cfg.lam)
    return ptk(t1, t2, cfg.lam, cfg.mu)


def _require_trees(e: Example):
    if e.tree_first is None or e.tree_second is None:
        raise DataError(
            f"tree block enabled but example ({e.query_id}, {e.candidate_id}) "
            "is missing its REL-linked tree pair"
        )


def _tk_selfs(e: Example, cfg: KernelConfig) -> tuple[float, float]:
    return (_tree_kernel(e.tree_first, e.tree_first, cfg),
            _tree_kernel(e.tree_second, e.tree_second, cfg))


def _pair_tk_cached(e_i, e_j, cfg, selfs_i, selfs_j) -> float:
    k1 = _tree_kernel(e_i.tree_first, e_j.tree_first, cfg)
    k2 = _tree_kernel(e_i.tree_second, e_j.tree_second, cfg)
    if cfg.normalize_tk:
        k1 = normalize_kernel(k1, selfs_i[0], selfs_j[0])
        k2 = normalize_kernel(k2, selfs_i[1], selfs_j[1])
    return k1 + k2


def pair_tk(e_i: Example, e_j: Example, cfg: KernelConfig) -> float:
    """Two-way tree kernel between examples.

    The first trees of the two examples are compared against each other, and
    likewise the second trees; the two values (each self-normalized when
    cfg.normalize_tk) are summed. With normalization the self-similarity
    pair_tk(e, e) is exactly 2.
    """
    _require_trees(e_i)
    _require_trees(e_j)
    selfs_i = _tk_selfs(e_i, cfg) if cfg.normalize_tk else (1.0, 1.0)
    selfs_j = _tk_selfs(e_j, cfg) if cfg.normalize_tk else (1.0, 1.0)
    return _pair_tk_cached(e_i, e_j, cfg, selfs_i, selfs_j)


def rbf(u: np.ndarray, v: np.ndarray, gamma: float) -> float:
    """Gaussian kernel exp(−γ‖u−v‖²)."""
    if gamma <= 0:
        raise DataError(f"gamma must be positive, got {gamma}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"rbf dimension mismatch: {u.shape} vs {v.shape}")
    d = u - v
    return math.exp(-gamma * float(np.dot(d, d)))


def _resolve_gamma(cfg: KernelConfig, dim: int) -> float:
    return cfg.gamma if cfg.gamma is not None else 1.0 / dim


def _require_vec(e: Example) -> np.ndarray:
    if e.vec is None:
        raise DataError(
            f"similarity block enabled but example ({e.query_id}, "
            f"{e.candidate_id}) has no feature vector"
        )
    return e.vec


def _require_rank(e: Example) -> float:
    if e.rank_value is None:
        raise DataError(
            f"rank block enabled but example ({e.query_id}, "
            f"{e.candidate_id}) has no rank feature"
        )
    return e.rank_value


def _cell(e_i, e_j, cfg, selfs_i, selfs_j) -> float:
    total = 0.0
    if cfg.use_sim:
        u = _require_vec(e_i)
        v = _require_vec(e_j)
        if u.shape != v.shape:
            raise DataError(
                f"feature vectors disagree in dimension: {u.shape} vs {v.shape}"
            )
        if cfg.vec_kernel == "LINEAR":
            total += float(np.dot(u, v))
        else:
            total += rbf(u, v, _resolve_gamma(cfg, len(u)))
    if cfg.use_tk:
        total += _pair_tk_cached(e_i, e_j, cfg, selfs_i, selfs_j)
    if cfg.use_rank:
        r_i = _require_rank(e_i)
        r_j = _require_rank(e_j)
        if cfg.rank_kernel == "LINEAR":
            total += r_i * r_j
        else:
            d = r_i - r_j
            total += math.exp(-_resolve_gamma(cfg, 1) * d * d)
    return total


def _prepare_selfs(examples, cfg):
    if cfg.use_tk:
        for e in examples:
            _require_trees(e)
        if cfg.normalize_tk:
            return [_tk_selfs(e, cfg) for e in examples]
    return [(1.0, 1.0)] * len(examples)


def combined_kernel(e_i: Example, e_j: Example, cfg: KernelConfig) -> float:
    """Sum of the enabled per-block kernels for one example pair."""
    selfs = _prepare_selfs([e_i, e_j], cfg)
    return _cell(e_i, e_j, cfg, selfs[0], selfs[1])


def gram_matrix(examples: list[Example], cfg: KernelConfig) -> np.ndarray:
    """Full kernel matrix G[i][j] = combined_kernel(e_i, e_j, cfg).

    Each cell is computed once and mirrored, so the result is exactly
    symmetric. Tree-kernel self values are computed once per example.
    """
    if not examples:
        raise DataError("gram_matrix requires at least one example")
    n = len(examples)
    selfs = _prepare_selfs(examples, cfg)
    G = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            value = _cell(examples[i], examples[j], cfg, selfs[i], selfs[j])
            G[i, j] = value
            G[j, i] = value
    return G


def kernel_matrix(rows: list[Example], cols: list[Example],
                  cfg: KernelConfig) -> np.ndarray:
    """Rectangular kernel matrix K[i][j] = combined_kernel(rows[i], cols[j])."""
    if not rows or not cols:
        raise DataError("kernel_matrix requires non-empty example lists")
    selfs_r = _prepare_selfs(rows, cfg)
    selfs_c = _prepare_selfs(cols, cfg)
    K = np.empty((len(rows), len(cols)), dtype=np.float64)
    for i, e_i in enumerate(rows):
        for j, e_j in enumerate(cols):
            K[i, j] = _cell(e_i, e_j, cfg, selfs_r[i], selfs_c[j])
    return K


# ---------------------------------------------------------------------------
# config fingerprint and the Gram cache file
# ---------------------------------------------------------------------------

def config_fingerprint(cfg: KernelConfig) -> str:
    """Stable hex digest of every kernel hyperparameter.

    Grams, models, and metrics reports all echo this value so that mixing
    artifacts produced under different kernels is detectable.
    """
    canon = ";".join(
        f"{name}={getattr(cfg, name)!r}"
        for name in sorted(f.name for f in fields(KernelConfig))
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


GRAM_MAGIC = "qrerank-gram v1"


def save_gram(path: str | Path, gram: np.ndarray, fingerprint: str) -> None:
    """Write a Gram matrix cache: header, then the lower triangle row-major."""
    gram = np.asarray(gram, dtype=np.float64)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise DataError("gram must be a square matrix")
    n = gram.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {GRAM_MAGIC}\n")
        fh.write(f"# fingerprint: {fingerprint}\n")
        fh.write(f"# n: {n}\n")
        for i in range(n):
            fh.write(" ".join("%.17g" % gram[i, j] for j in range(i + 1)))
            fh.write("\n")


def load_gram(path: str | Path) -> tuple[np.ndarray, str]:
    """Read a Gram cache written by :func:`save_gram`.

    Returns (matrix, fingerprint); the matrix is mirrored back to full
    symmetric form. Raises :class:`DataError` on any malformation.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or lines[0] != f"# {GRAM_MAGIC}":
        raise DataError(f"{path}: not a gram cache file")
    if not lines[1].startswith("# fingerprint: "):
        raise DataError(f"{path}: missing fingerprint header")
    fingerprint = lines[1][len("# fingerprint: "):].strip()
    if not lines[2].startswith("# n: "):
        raise DataError(f"{path}: missing size header")
    try:
        n = int(lines[2][len("# n: "):])
    except ValueError as exc:
        raise DataError(f"{path}: bad size header") from exc
    rows = lines[3:]
    if len(rows) != n:
        raise DataError(f"{path}: expected {n} rows, found {len(rows)}")
    G = np.zeros((n, n), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != i + 1:
            raise DataError(f"{path}: row {i} has {len(parts)} entries, "
                            f"expected {i + 1}")
        for j, text in enumerate(parts):
            try:
                value = float(text)
            except ValueError as exc:
                raise DataError(f"{path}: bad number {text!r} in row {i}") from exc
            G[i, j] = value
            G[j, i] = value
    if not np.all(np.isfinite(G)):
        raise DataError(f"{path}: gram contains non-finite values")
    return G, fingerprint
