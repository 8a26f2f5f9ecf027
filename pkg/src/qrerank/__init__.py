"""qrerank: kernel-based question reranking for community Question Answering.

The package turns (original question, retrieved question) pairs into
featurized examples — text similarities, REL-linked syntactic macro-trees,
search-rank features, optional embedding and MT-evaluation blocks — combines
them with tree and vector kernels into Gram matrices, trains a binary SVM on
those matrices with an SMO solver, and evaluates the resulting rankings with
MAP / AvgRec / MRR plus paired randomization significance tests.
"""

from .errors import DataError, NumericalError
from .features import (
    MTE_NAMES,
    RANK_MODES,
    SIM_MEASURES,
    SIM_NGRAM_ORDERS,
    FeatureConfig,
    FeatureVector,
    TokenSeq,
    concat_features,
    containment,
    cosine,
    embedding_pair,
    gst_sim,
    jaccard,
    lcs_sim,
    load_embeddings,
    load_stopwords,
    mte_vector,
    ngrams,
    ptk_feature,
    rank_feature,
    similarity_vector,
    tokenize,
)
from .kernels import (
    Example,
    KernelConfig,
    combined_kernel,
    config_fingerprint,
    gram_matrix,
    kernel_matrix,
    load_gram,
    normalize_kernel,
    pair_tk,
    ptk,
    rbf,
    save_gram,
    stk,
)
from .pipeline import (
    CorpusRecord,
    RunConfig,
    build_examples,
    class_counts,
    gold_binary,
    load_corpus,
    load_examples,
    make_groups,
    rank_baseline_groups,
    run_experiment,
    save_examples,
    score_examples,
    task_cutoff,
)
from .rankeval import (
    Candidate,
    QueryGroup,
    average_precision,
    evaluate,
    per_query_average_precision,
    randomization_test,
    read_predictions,
    rerank,
    reranked_candidates,
    write_predictions,
)
from .rellink import DEFAULT_PHRASE_LABELS, REL_PREFIX, RelConfig, rel_link
from .svm import TrainConfig, TrainedModel, decision, load_model, save_model, train_smo
from .treebank import (
    SyntaxTree,
    TreeParseError,
    macro_tree,
    node_count,
    parse_bracketed,
    read_tree_file,
    to_bracketed,
    write_tree_file,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NumericalError",
    "MTE_NAMES",
    "RANK_MODES",
    "SIM_MEASURES",
    "SIM_NGRAM_ORDERS",
    "FeatureConfig",
    "FeatureVector",
    "TokenSeq",
    "concat_features",
    "containment",
    "cosine",
    "embedding_pair",
    "gst_sim",
    "jaccard",
    "lcs_sim",
    "load_embeddings",
    "load_stopwords",
    "mte_vector",
    "ngrams",
    "ptk_feature",
    "rank_feature",
    "similarity_vector",
    "tokenize",
    "Example",
    "KernelConfig",
    "combined_kernel",
    "config_fingerprint",
    "gram_matrix",
    "kernel_matrix",
    "load_gram",
    "normalize_kernel",
    "pair_tk",
    "ptk",
    "rbf",
    "save_gram",
    "stk",
    "CorpusRecord",
    "RunConfig",
    "build_examples",
    "class_counts",
    "gold_binary",
    "load_corpus",
    "load_examples",
    "make_groups",
    "rank_baseline_groups",
    "run_experiment",
    "save_examples",
    "score_examples",
    "task_cutoff",
    "Candidate",
    "QueryGroup",
    "average_precision",
    "evaluate",
    "per_query_average_precision",
    "randomization_test",
    "read_predictions",
    "rerank",
    "reranked_candidates",
    "write_predictions",
    "DEFAULT_PHRASE_LABELS",
    "REL_PREFIX",
    "RelConfig",
    "rel_link",
    "TrainConfig",
    "TrainedModel",
    "decision",
    "load_model",
    "save_model",
    "train_smo",
    "SyntaxTree",
    "TreeParseError",
    "macro_tree",
    "node_count",
    "parse_bracketed",
    "read_tree_file",
    "to_bracketed",
    "write_tree_file",
    "__version__",
]
