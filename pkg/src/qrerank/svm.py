"""Binary SVM trained on a precomputed Gram matrix, SMO-style.

The solver maximizes the usual dual

    W(α) = Σ α_i − ½ Σ_ij α_i α_j y_i y_j G_ij,   0 ≤ α_i ≤ C_i,  Σ α_i y_i = 0

by repeatedly optimizing one pair of variables analytically. Working pairs
follow the first-order heuristic: the worst KKT violator is paired with the
partner maximizing |E_i − E_j|; exact ties are broken by a seeded shuffle,
so training is bit-for-bit reproducible for a fixed seed. Convergence is
declared when no example violates its KKT condition by more than ``tol``,
measured with the same bias rule the final model ships with.

Scores come from the dual expansion r(x) = Σ α_i y_i K(x_i, x) + b, used
directly as the re-ranking score.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Solver knobs. C scales per class via c_scale_pos / c_scale_neg
    (both 1.0 by default — no class weighting)."""

    C: float = 1.0
    tol: float = 1e-3
    eps: float = 1e-9
    max_passes: int = 10000
    seed: int = 0
    c_scale_pos: float = 1.0
    c_scale_neg: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise DataError(f"C must be positive, got {self.C}")
        if not self.tol > 0:
            raise DataError(f"tol must be positive, got {self.tol}")
        if not self.eps > 0:
            raise DataError(f"eps must be positive, got {self.eps}")
        if self.max_passes < 1:
            raise DataError("max_passes must be >= 1")
        if not (self.c_scale_pos > 0 and self.c_scale_neg > 0):
            raise DataError("per-class C multipliers must be positive")


@dataclass(frozen=True)
class TrainedModel:
    """Dual solution restricted to its support set.

    dual_coefs[k] = α_k · y_k for the example at support_indices[k]. The
    kernel fingerprint ties the model to the kernel configuration its Gram
    was computed under; the training checksum identifies the exact training
    inputs.
    """

    support_indices: tuple[int, ...]
    dual_coefs: np.ndarray
    bias: float
    kernel_fingerprint: str = ""
    training_checksum: str = ""

    def __post_init__(self):
        coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        object.__setattr__(self, "dual_coefs", coefs)
        object.__setattr__(self, "support_indices",
                           tuple(int(i) for i in self.support_indices))
        if coefs.ndim != 1 or len(coefs) != len(self.support_indices):
            raise DataError("dual_coefs and support_indices differ in length")
        if not math.isfinite(self.bias):
            raise DataError("bias must be finite")


def _training_checksum(gram: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(gram).tobytes())
    h.update(np.ascontiguousarray(y.astype(np.int8)).tobytes())
    h.update(repr((cfg.C, cfg.tol, cfg.eps, cfg.max_passes, cfg.seed,
                   cfg.c_scale_pos, cfg.c_scale_neg)).encode())
    return h.hexdigest()


def _bias_from_state(alpha, y, g, box, eps):
    """The bias rule the final model uses: average of y_i − g_i over free
    support vectors; otherwise the midpoint of the feasible interval the
    bound examples leave open."""
    F = y - g
    free = (alpha > eps) & (alpha < box - eps)
    if free.any():
        return float(F[free].mean())
    at_zero = alpha <= eps
    at_c = alpha >= box - eps
    lower_set = (at_zero & (y > 0)) | (at_c & (y < 0))
    upper_set = (at_zero & (y < 0)) | (at_c & (y > 0))
    b_lo = F[lower_set].max() if lower_set.any() else None
    b_hi = F[upper_set].min() if upper_set.any() else None
    if b_lo is not None and b_hi is not None:
        return float((b_lo + b_hi) / 2.0)
    if b_lo is not None:
        return float(b_lo)
    if b_hi is not None:
        return float(b_hi)
    return 0.0


def _violations(alpha, y, f, box, tol, eps):
    """Per-example KKT violation magnitudes (0 where satisfied): examples
    that could grow need y·f ≥ 1 − tol, examples that could shrink need
    y·f ≤ 1 + tol."""
    r = y * f - 1.0
    viol = np.zeros_like(alpha)
    can_grow = alpha < box - eps
    can_shrink = alpha > eps
    viol[can_grow] = np.maximum(viol[can_grow], -r[can_grow] - tol)
    viol[can_shrink] = np.maximum(viol[can_shrink], r[can_shrink] - tol)
    return np.maximum(viol, 0.0)


def _dual_objective(alpha, y, g):
    # W(α) = Σα − ½ Σ α_i y_i g_i  with g_i = Σ_j α_j y_j G_ij
    return float(alpha.sum() - 0.5 * np.dot(alpha * y, g))


def train_smo(gram, labels, cfg: TrainConfig = TrainConfig(),
              kernel_fingerprint: str = "") -> TrainedModel:
    """Solve the dual on a precomputed Gram matrix.

    ``gram`` must be symmetric (asymmetry beyond 1e-9 is rejected) and
    ``labels`` must contain both classes. Returns the trained model; logs a
    warning if max_passes runs out before the KKT conditions are met.
    """
    G = np.asarray(gram, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DataError(f"gram must be square, got shape {G.shape}")
    n = G.shape[0]
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (n,):
        raise DataError(f"labels length {y.shape} does not match gram size {n}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise DataError("training data contains a single class")
    asym = float(np.max(np.abs(G - G.T))) if n else 0.0
    if asym > 1e-9:
        raise NumericalError(f"gram is not symmetric (max asymmetry {asym:.3g})")
    G = (G + G.T) / 2.0

    checksum = _training_checksum(G, y, cfg)
    box = np.where(y > 0, cfg.C * cfg.c_scale_pos, cfg.C * cfg.c_scale_neg)
    alpha = np.zeros(n)
    g = np.zeros(n)  # g_i = Σ_j α_j y_j G_ij
    rng = random.Random(cfg.seed)
    if __debug__:
        prev_obj = _dual_objective(alpha, y, g)

    def tie_pick(mask_values, target):
        candidates = np.flatnonzero(mask_values == target)
        return int(candidates[rng.randrange(len(candidates))])

    def try_pair(i, j):
        """Analytically optimize (α_i, α_j); returns True on real progress."""
        if i == j:
            return False
        eta = G[i, i] + G[j, j] - 2.0 * G[i, j]
        if eta <= 0.0:
            return False
        s = y[i] * y[j]
        if s < 0:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(box[j], box[i] + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - box[i])
            H = min(box[j], alpha[i] + alpha[j])
        if H - L < cfg.eps:
            return False
        E_i = g[i] - y[i]
        E_j = g[j] - y[j]
        aj_new = alpha[j] + y[j] * (E_i - E_j) / eta
        aj_new = min(max(aj_new, L), H)
        d_j = aj_new - alpha[j]
        if abs(d_j) < cfg.eps:
            return False
        ai_new = alpha[i] + s * (alpha[j] - aj_new)
        ai_new = min(max(ai_new, 0.0), box[i])
        d_i = ai_new - alpha[i]
        g[:] = g + (d_i * y[i]) * G[i] + (d_j * y[j]) * G[j]
        alpha[i] = ai_new
        alpha[j] = aj_new
        return True

    converged = False
    for _ in range(cfg.max_passes):
        b = _bias_from_state(alpha, y, g, box, cfg.eps)
        viol = _violations(alpha, y, g + b, box, cfg.tol, cfg.eps)
        worst = viol.max()
        if worst <= 0.0:
            converged = True
            break

        progressed = False
        E = g - y
        # violators in decreasing order of violation; ties rotated by seed
        order = np.argsort(-viol, kind="stable")
        order = [int(k) for k in order if viol[k] > 0.0]
        for i in ([tie_pick(viol, worst)] + order):
            gaps = np.abs(E[i] - E)
            j = tie_pick(gaps, gaps.max())
            if try_pair(i, j):
                progressed = True
                break
            others = [k for k in range(n) if k != i and k != j]
            rng.shuffle(others)
            for k in others:
                if try_pair(i, k):
                    progressed = True
                    break
            if progressed:
                break
        if not progressed:
            logger.warning(
                "SMO stalled with max KKT violation %.3g (tol %.3g); "
                "keeping current feasible iterate", worst, cfg.tol)
            break
        if __debug__:
            obj = _dual_objective(alpha, y, g)
            assert obj >= prev_obj - 1e-9 * max(1.0, abs(prev_obj)), (
                f"dual objective decreased: {prev_obj} -> {obj}")
            prev_obj = obj
    else:
        b = _bias_from_state(alpha, y, g, box, cfg.eps)
        logger.warning("SMO reached max_passes=%d before meeting tol=%g",
                       cfg.max_passes, cfg.tol)

    support = np.flatnonzero(alpha > cfg.eps)
    return TrainedModel(
        support_indices=tuple(int(i) for i in support),
        dual_coefs=alpha[support] * y[support],
        bias=float(b),
        kernel_fingerprint=kernel_fingerprint,
        training_checksum=checksum,
    )


def decision(model: TrainedModel, kernel_row) -> float:
    """Score one example: Σ dual_coefs[k]·K(support_k, x) + bias.

    ``kernel_row`` holds the kernel values against the support examples, in
    support order.
    """
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != (len(model.support_indices),):
        raise DataError(
            f"kernel row has {row.shape} values for "
            f"{len(model.support_indices)} support vectors"
        )
    return float(np.dot(model.dual_coefs, row) + model.bias)


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

MODEL_MAGIC = "qrerank-model v1"


def save_model(path: str | Path, model: TrainedModel) -> None:
    """Versioned key/value text format; floats are written with full
    round-trip precision so save→load is lossless."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {MODEL_MAGIC}\n")
        fh.write(f"n_support: {len(model.support_indices)}\n")
        fh.write(f"bias: {model.bias!r}\n")
        fh.write(f"kernel_fingerprint: {model.kernel_fingerprint}\n")
        fh.write(f"training_checksum: {model.training_checksum}\n")
        fh.write("support_indices: "
                 + " ".join(str(i) for i in model.support_indices) + "\n")
        fh.write("dual_coefs: "
                 + " ".join(repr(float(c)) for c in model.dual_coefs) + "\n")


def load_model(path: str | Path, expected_fingerprint: str | None = None,
               strict: bool = False) -> TrainedModel:
    """Read a model file back.

    When ``expected_fingerprint`` is given and disagrees with the stored
    one, strict mode raises; otherwise a warning is logged (the scores would
    silently come from a different kernel).
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {MODEL_MAGIC}":
        raise DataError(f"{path}: not a model file")
    fields = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, sep, value = line.partition(": ")
        if not sep:
            raise DataError(f"{path}: malformed line {line!r}")
        fields[key] = value
    required = {"n_support", "bias", "kernel_fingerprint",
                "training_checksum", "support_indices", "dual_coefs"}
    missing = required - fields.keys()
    if missing:
        raise DataError(f"{path}: truncated model file, missing {sorted(missing)}")
    try:
        n_support = int(fields["n_support"])
        bias = float(fields["bias"])
        support = tuple(int(x) for x in fields["support_indices"].split())
        coefs = np.array([float(x) for x in fields["dual_coefs"].split()],
                         dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: malformed model field") from exc
    if len(support) != n_support or len(coefs) != n_support:
        raise DataError(f"{path}: support arrays do not match n_support")
    fingerprint = fields["kernel_fingerprint"]
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        message = (f"{path}: model kernel fingerprint {fingerprint[:12]}… does "
                   f"not match the current kernel config "
                   f"{expected_fingerprint[:12]}…")
        if strict:
            raise DataError(message)
        logger.warning("%s", message)
    return TrainedModel(
        support_indices=support,
        dual_coefs=coefs,
        bias=bias,
        kernel_fingerprint=fingerprint,
        training_checksum=fields["training_checksum"],
    )
