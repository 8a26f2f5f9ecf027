"""Command-line interface.

Six subcommands cover the experiment pipeline stage by stage::

    qrerank featurize --task B --corpus train.jsonl --out train.examples
    qrerank gram      --examples train.examples --out train.gram
    qrerank train     --gram train.gram --examples train.examples --out model.txt
    qrerank rerank    --model model.txt --train-examples train.examples \
                      --test-examples test.examples --out predictions.tsv
    qrerank evaluate  --predictions predictions.tsv --k 10
    qrerank sigtest   --predictions-a ours.tsv --predictions-b baseline.tsv

Configuration values resolve in three layers: dataclass defaults, then a
flat ``key = value`` config file (``--config``), then explicit command-line
flags.  Nested fields use dotted keys in the file (``kernel.lam = 0.4``,
``train.C = 1.0``, ``rel.min_shared_tokens = 2``).

Exit codes: 0 success; 1 usage errors; 2 data/file errors; 3 numerical
failures.  When ``--stopwords`` names a relative path that does not exist,
the directory in the ``QRERANK_STOPWORDS_DIR`` environment variable is tried
as a fallback location.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .errors import DataError, NumericalError
from .kernels import KernelConfig, config_fingerprint, gram_matrix, save_gram, load_gram
from .pipeline import (
    RunConfig,
    build_examples,
    load_corpus,
    load_examples,
    make_groups,
    run_experiment,  # noqa: F401  (re-exported for programmatic use)
    save_examples,
    score_examples,
)
from .rankeval import (
    QueryGroup,
    evaluate,
    per_query_average_precision,
    randomization_test,
    read_predictions,
    reranked_candidates,
    write_predictions,
)
from .rellink import RelConfig
from .svm import TrainConfig, load_model, save_model, train_smo

logger = logging.getLogger(__name__)

ENV_STOPWORD_DIR = "QRERANK_STOPWORDS_DIR"


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    lowered = text.casefold()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise DataError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text: str):
    return None if text.casefold() == "none" else float(text)


def _parse_labels(text: str) -> frozenset:
    labels = frozenset(part.strip() for part in text.split(",") if part.strip())
    if not labels:
        raise DataError(f"expected a comma-separated label list, got {text!r}")
    return labels


CONFIG_SCHEMA = {
    "task": str,
    "seed": int,
    "rank_mode": str,
    "mte_side": str,
    "gst_min_match": int,
    "macro_root_label": str,
    "use_sim_features": _parse_bool,
    "use_ptk_feature": _parse_bool,
    "use_embeddings": _parse_bool,
    "use_mte": _parse_bool,
    "stopword_path": str,
    "embedding_path": str,
    "kernel.tk_kind": str,
    "kernel.lam": float,
    "kernel.mu": float,
    "kernel.gamma": _parse_optional_float,
    "kernel.rank_kernel": str,
    "kernel.vec_kernel": str,
    "kernel.normalize_tk": _parse_bool,
    "kernel.use_sim": _parse_bool,
    "kernel.use_tk": _parse_bool,
    "kernel.use_rank": _parse_bool,
    "rel.min_shared_tokens": int,
    "rel.case_insensitive": _parse_bool,
    "rel.phrase_labels": _parse_labels,
    "train.C": float,
    "train.tol": float,
    "train.eps": float,
    "train.max_passes": int,
    "train.c_scale_pos": float,
    "train.c_scale_neg": float,
}


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` config file into typed settings."""
    settings: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            if key not in CONFIG_SCHEMA:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in settings:
                raise DataError(f"{path}:{lineno}: duplicate config key {key!r}")
            try:
                settings[key] = CONFIG_SCHEMA[key](value)
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key!r}: "
                                f"{exc}") from exc
    return settings


def resolve_stopword_path(path: str | None) -> str | None:
    """Resolve a stopword file, falling back to the env-var directory."""
    if path is None:
        return None
    if os.path.isabs(path) or os.path.exists(path):
        return path
    env_dir = os.environ.get(ENV_STOPWORD_DIR)
    if env_dir:
        candidate = os.path.join(env_dir, path)
        if os.path.exists(candidate):
            return candidate
    return path


def build_run_config(settings: dict) -> RunConfig:
    """Assemble a RunConfig from flat (possibly dotted) settings."""
    unknown = set(settings) - set(CONFIG_SCHEMA)
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    nested: dict[str, dict] = {"kernel": {}, "rel": {}, "train": {}}
    top: dict = {}
    for key, value in settings.items():
        if "." in key:
            prefix, _, fieldname = key.partition(".")
            nested[prefix][fieldname] = value
        else:
            top[key] = value
    if "stopword_path" in top:
        top["stopword_path"] = resolve_stopword_path(top["stopword_path"])
    try:
        return RunConfig(
            kernel=KernelConfig(**nested["kernel"]),
            rel=RelConfig(**nested["rel"]),
            train=TrainConfig(**nested["train"]),
            **top,
        )
    except TypeError as exc:
        raise DataError(f"bad configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# flag definitions
# ---------------------------------------------------------------------------

# argparse destination -> config key
_FLAG_TO_KEY = {
    "task": "task",
    "seed": "seed",
    "rank_mode": "rank_mode",
    "mte_side": "mte_side",
    "gst_min_match": "gst_min_match",
    "macro_root_label": "macro_root_label",
    "use_sim_features": "use_sim_features",
    "use_ptk_feature": "use_ptk_feature",
    "use_embeddings": "use_embeddings",
    "use_mte": "use_mte",
    "stopwords": "stopword_path",
    "embeddings": "embedding_path",
    "tk_kind": "kernel.tk_kind",
    "lam": "kernel.lam",
    "mu": "kernel.mu",
    "gamma": "kernel.gamma",
    "rank_kernel": "kernel.rank_kernel",
    "vec_kernel": "kernel.vec_kernel",
    "normalize_tk": "kernel.normalize_tk",
    "use_sim": "kernel.use_sim",
    "use_tk": "kernel.use_tk",
    "use_rank": "kernel.use_rank",
    "min_shared_tokens": "rel.min_shared_tokens",
    "case_insensitive": "rel.case_insensitive",
    "phrase_labels": "rel.phrase_labels",
    "svm_c": "train.C",
    "tol": "train.tol",
    "smo_eps": "train.eps",
    "max_passes": "train.max_passes",
    "c_scale_pos": "train.c_scale_pos",
    "c_scale_neg": "train.c_scale_neg",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    bool_action = argparse.BooleanOptionalAction
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--task", choices=("B", "D"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--rank-mode", choices=("AS_IS", "INVERSE"))
    parser.add_argument("--mte-side", choices=("qo", "qs"))
    parser.add_argument("--gst-min-match", type=int)
    parser.add_argument("--macro-root-label")
    parser.add_argument("--use-sim-features", action=bool_action, default=None)
    parser.add_argument("--use-ptk-feature", action=bool_action, default=None)
    parser.add_argument("--use-embeddings", action=bool_action, default=None)
    parser.add_argument("--use-mte", action=bool_action, default=None)
    parser.add_argument("--stopwords", metavar="FILE",
                        help=f"stopword list (relative paths also searched "
                             f"in ${ENV_STOPWORD_DIR})")
    parser.add_argument("--embeddings", metavar="FILE",
                        help="tab-separated id/vector file")
    parser.add_argument("--tk-kind", choices=("STK", "PTK"))
    parser.add_argument("--lam", type=float)
    parser.add_argument("--mu", type=float)
    parser.add_argument("--gamma", type=_parse_optional_float)
    parser.add_argument("--rank-kernel", choices=("LINEAR", "RBF"))
    parser.add_argument("--vec-kernel", choices=("LINEAR", "RBF"))
    parser.add_argument("--normalize-tk", action=bool_action, default=None)
    parser.add_argument("--use-sim", action=bool_action, default=None)
    parser.add_argument("--use-tk", action=bool_action, default=None)
    parser.add_argument("--use-rank", action=bool_action, default=None)
    parser.add_argument("--min-shared-tokens", type=int)
    parser.add_argument("--case-insensitive", action=bool_action, default=None)
    parser.add_argument("--phrase-labels", type=_parse_labels,
                        metavar="NP,VP,PP")
    parser.add_argument("--svm-c", type=float, metavar="C")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--smo-eps", type=float)
    parser.add_argument("--max-passes", type=int)
    parser.add_argument("--c-scale-pos", type=float)
    parser.add_argument("--c-scale-neg", type=float)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    settings = parse_config_file(args.config) if args.config else {}
    for dest, key in _FLAG_TO_KEY.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    return build_run_config(settings)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_featurize(args) -> int:
    cfg = config_from_args(args)
    records = load_corpus(args.corpus, cfg.task)
    examples = build_examples(records, cfg)
    save_examples(args.out, examples)
    print(f"featurized {len(examples)} examples -> {args.out}")
    return 0


def _cmd_gram(args) -> int:
    cfg = config_from_args(args)
    examples = load_examples(args.examples)
    gram = gram_matrix(examples, cfg.kernel)
    fingerprint = config_fingerprint(cfg.kernel)
    save_gram(args.out, gram, fingerprint)
    print(f"computed {gram.shape[0]}x{gram.shape[1]} gram "
          f"({fingerprint[:12]}...) -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = config_from_args(args)
    gram, fingerprint = load_gram(args.gram)
    current = config_fingerprint(cfg.kernel)
    if fingerprint != current:
        logger.warning(
            "gram file was computed under a different kernel config "
            "(%s... vs current %s...)", fingerprint[:12], current[:12])
    examples = load_examples(args.examples)
    if len(examples) != gram.shape[0]:
        raise DataError(
            f"{len(examples)} examples for a {gram.shape[0]}x"
            f"{gram.shape[1]} gram matrix")
    labels = [e.label for e in examples]
    model = train_smo(gram, labels, replace(cfg.train, seed=cfg.seed),
                      kernel_fingerprint=fingerprint)
    save_model(args.out, model)
    print(f"trained on {len(labels)} examples, "
          f"{len(model.support_indices)} support vectors -> {args.out}")
    return 0


def _cmd_rerank(args) -> int:
    cfg = config_from_args(args)
    model = load_model(args.model,
                       expected_fingerprint=config_fingerprint(cfg.kernel),
                       strict=args.strict)
    train_examples = load_examples(args.train_examples)
    test_examples = load_examples(args.test_examples)
    scores = score_examples(test_examples, model, train_examples, cfg.kernel)
    groups = [QueryGroup(g.query_id, reranked_candidates(g))
              for g in make_groups(test_examples, scores)]
    write_predictions(args.out, groups)
    print(f"reranked {len(groups)} queries -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    groups = read_predictions(args.predictions)
    metrics = evaluate(groups, k=args.k)
    for name in ("MAP", "AvgRec", "MRR"):
        print(f"{name}: {metrics[name]:.4f}")
    return 0


def _cmd_sigtest(args) -> int:
    groups_a = read_predictions(args.predictions_a)
    groups_b = read_predictions(args.predictions_b)
    ap_a = per_query_average_precision(groups_a, k=args.k)
    ap_b = per_query_average_precision(groups_b, k=args.k)
    if set(ap_a) != set(ap_b):
        only_a = sorted(set(ap_a) - set(ap_b))[:5]
        only_b = sorted(set(ap_b) - set(ap_a))[:5]
        raise DataError(
            f"prediction files cover different queries "
            f"(only in a: {only_a}, only in b: {only_b})")
    order = sorted(ap_a)
    a = [ap_a[q] for q in order]
    b = [ap_b[q] for q in order]
    p = randomization_test(a, b, resamples=args.resamples, seed=args.seed)
    mean_a = sum(a) / len(a)
    mean_b = sum(b) / len(b)
    print(f"queries: {len(order)}")
    print(f"MAP a: {100.0 * mean_a:.4f}")
    print(f"MAP b: {100.0 * mean_b:.4f}")
    print(f"p_value: {p:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrerank",
        description="Kernel-based question reranking toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="corpus JSONL -> featurized examples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("gram", help="examples -> Gram matrix file")
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_gram)

    p = sub.add_parser("train", help="Gram + labels -> SVM model file")
    p.add_argument("--gram", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("rerank", help="score test examples, write predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--train-examples", required=True)
    p.add_argument("--test-examples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true",
                   help="fail on kernel fingerprint mismatch")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("evaluate", help="predictions TSV -> MAP/AvgRec/MRR")
    p.add_argument("--predictions", required=True)
    p.add_argument("--k", type=int, default=None,
                   help="evaluation cutoff (default: group size)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sigtest",
                       help="paired randomization test on two predictions")
    p.add_argument("--predictions-a", required=True)
    p.add_argument("--predictions-b", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sigtest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; remap the latter
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
