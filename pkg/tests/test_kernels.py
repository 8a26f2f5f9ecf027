"""Tree kernels against brute-force enumeration oracles, plus the pair kernel,
vector kernels, Gram assembly, and the Gram cache file."""

import math

import numpy as np
import pytest

from qrerank.errors import DataError, NumericalError
from qrerank.kernels import (
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
from qrerank.treebank import SyntaxTree, parse_bracketed

from conftest import make_examples, make_rng, random_small_tree
from oracles import ptk_bruteforce, stk_bruteforce


def t(s):
    return parse_bracketed(s)


class TestSTK:
    def test_no_shared_production_is_zero(self):
        assert stk(t("(S (A a))"), t("(S (B b))"), 1.0) == 0.0

    def test_self_kernel_counts_fragments(self):
        T = t("(S (A a) (B b))")
        assert stk(T, T, 1.0) == pytest.approx(6.0, abs=1e-12)

    def test_decay_weighted_self_kernel(self):
        T = t("(S (A a) (B b))")
        # the S production contributes 0.4·1.4², the two preterminals 0.4 each
        assert stk(T, T, 0.4) == pytest.approx(1.584, abs=1e-12)

    def test_matches_bruteforce_on_random_trees(self):
        rng = make_rng(101)
        trees = [random_small_tree(rng, max_nodes=8) for _ in range(60)]
        for lam in (1.0, 0.4):
            for i in range(len(trees)):
                t1 = trees[i]
                t2 = trees[(i + 1) % len(trees)]
                assert stk(t1, t2, lam) == pytest.approx(
                    stk_bruteforce(t1, t2, lam), abs=1e-9)
                assert stk(t1, t1, lam) == pytest.approx(
                    stk_bruteforce(t1, t1, lam), abs=1e-9)

    def test_exact_symmetry(self):
        rng = make_rng(19)
        for _ in range(50):
            t1 = random_small_tree(rng, max_nodes=8)
            t2 = random_small_tree(rng, max_nodes=8)
            assert stk(t1, t2, 0.4) == stk(t2, t1, 0.4)

    def test_lambda_validated(self):
        T = t("(S (A a))")
        with pytest.raises(DataError):
            stk(T, T, 0.0)
        with pytest.raises(DataError):
            stk(T, T, 1.5)


class TestPTK:
    def test_label_mismatch_is_zero(self):
        assert ptk(SyntaxTree("X"), SyntaxTree("Y"), 1.0, 1.0) == 0.0

    def test_single_node_base_case(self):
        assert ptk(SyntaxTree("X"), SyntaxTree("X"), 1.0, 1.0) == pytest.approx(1.0)
        assert ptk(SyntaxTree("X"), SyntaxTree("X"), 0.4, 0.5) == pytest.approx(
            0.5 * 0.4 * 0.4)

    def test_preterminal_self_kernel(self):
        A = t("(A a)")
        # fragments: a alone, A alone, (A a)
        assert ptk(A, A, 1.0, 1.0) == pytest.approx(3.0)

    def test_matches_bruteforce_on_random_trees(self):
        rng = make_rng(202)
        trees = [random_small_tree(rng, max_nodes=8) for _ in range(60)]
        for lam, mu in ((1.0, 1.0), (0.4, 0.4), (0.7, 0.3)):
            for i in range(len(trees)):
                t1 = trees[i]
                t2 = trees[(i + 1) % len(trees)]
                assert ptk(t1, t2, lam, mu) == pytest.approx(
                    ptk_bruteforce(t1, t2, lam, mu), abs=1e-9)
                assert ptk(t1, t1, lam, mu) == pytest.approx(
                    ptk_bruteforce(t1, t1, lam, mu), abs=1e-9)

    def test_exact_symmetry(self):
        rng = make_rng(23)
        for _ in range(50):
            t1 = random_small_tree(rng, max_nodes=8)
            t2 = random_small_tree(rng, max_nodes=8)
            assert ptk(t1, t2, 0.4, 0.4) == ptk(t2, t1, 0.4, 0.4)

    def test_parameters_validated(self):
        T = t("(A a)")
        with pytest.raises(DataError):
            ptk(T, T, 0.0, 0.4)
        with pytest.raises(DataError):
            ptk(T, T, 0.4, 1.0001)


class TestLabelIdentityInvariance:
    def test_consistent_relabeling_preserves_kernels(self):
        # tags are ordinary label text: renaming labels bijectively on both
        # trees cannot change either kernel value
        rng = make_rng(31)
        prefix = lambda node: SyntaxTree(
            "REL-" + node.label, tuple(prefix(c) for c in node.children))
        for _ in range(20):
            t1 = random_small_tree(rng, max_nodes=8)
            t2 = random_small_tree(rng, max_nodes=8)
            assert stk(prefix(t1), prefix(t2), 0.4) == pytest.approx(
                stk(t1, t2, 0.4), abs=1e-12)
            assert ptk(prefix(t1), prefix(t2), 0.4, 0.4) == pytest.approx(
                ptk(t1, t2, 0.4, 0.4), abs=1e-12)

    def test_rel_marks_do_change_matching(self):
        plain = t("(S (NP (NN visa)))")
        marked = t("(S (REL-NP (NN visa)))")
        assert stk(plain, marked, 1.0) < stk(plain, plain, 1.0)


class TestNormalizeKernel:
    def test_self_normalization_is_one(self):
        assert normalize_kernel(3.7, 3.7, 3.7) == pytest.approx(1.0)

    def test_arithmetic_identity(self):
        assert normalize_kernel(2.0, 4.0, 4.0) == pytest.approx(0.5)

    def test_degenerate_self_kernel_rejected(self):
        with pytest.raises(NumericalError, match="degenerate self-kernel"):
            normalize_kernel(1.0, 0.0, 2.0)
        with pytest.raises(NumericalError):
            normalize_kernel(1.0, 2.0, -1.0)

    def test_normalized_stk_in_unit_interval(self):
        rng = make_rng(37)
        done = 0
        while done < 40:
            t1 = random_small_tree(rng, max_nodes=8)
            t2 = random_small_tree(rng, max_nodes=8)
            if t1.is_leaf or t2.is_leaf:
                continue  # a bare leaf has no productions: self-kernel 0
            k = normalize_kernel(stk(t1, t2, 0.4), stk(t1, t1, 0.4),
                                 stk(t2, t2, 0.4))
            assert 0.0 <= k <= 1.0 + 1e-12
            done += 1


def example_with_trees(first, second, qid="q1", cid="c1", rank=1):
    return Example(query_id=qid, candidate_id=cid, label=1,
                   original_rank=rank, tree_first=first, tree_second=second)


class TestPairTK:
    def test_self_similarity_is_two_when_normalized(self):
        e = example_with_trees(t("(S (A a) (B b))"), t("(S (B b))"))
        cfg = KernelConfig(use_tk=True, use_sim=False, tk_kind="STK")
        assert pair_tk(e, e, cfg) == pytest.approx(2.0, abs=1e-12)

    def test_symmetry_on_random_examples(self):
        rng = make_rng(41)
        cfg = KernelConfig(use_tk=True, use_sim=False, tk_kind="PTK")
        ex = make_examples(rng, 8)
        for i in range(len(ex)):
            for j in range(i, len(ex)):
                assert pair_tk(ex[i], ex[j], cfg) == pair_tk(ex[j], ex[i], cfg)

    def test_unnormalized_equals_oracle_sum(self):
        first_i = t("(S (A a) (B b))")
        second_i = t("(S (B b) (A a))")
        first_j = t("(S (A a) (A a))")
        second_j = t("(S (B b))")
        e_i = example_with_trees(first_i, second_i)
        e_j = example_with_trees(first_j, second_j, cid="c2")
        cfg = KernelConfig(use_tk=True, use_sim=False, tk_kind="STK",
                           lam=1.0, normalize_tk=False)
        expected = (stk_bruteforce(first_i, first_j, 1.0)
                    + stk_bruteforce(second_i, second_j, 1.0))
        assert pair_tk(e_i, e_j, cfg) == pytest.approx(expected, abs=1e-9)

    def test_missing_trees_rejected(self):
        e = Example(query_id="q", candidate_id="c", label=1, original_rank=1,
                    vec=np.zeros(3))
        cfg = KernelConfig(use_tk=True, use_sim=False)
        with pytest.raises(DataError, match="tree"):
            pair_tk(e, e, cfg)


class TestRBF:
    def test_zero_distance(self):
        v = np.array([0.3, -1.2, 4.0])
        assert rbf(v, v, 0.7) == pytest.approx(1.0)

    def test_scalar_value(self):
        assert rbf(np.array([0.0]), np.array([1.0]), 1.0) == pytest.approx(
            math.exp(-1.0))

    def test_monotone_in_distance(self):
        u = np.zeros(2)
        values = [rbf(u, np.array([d, 0.0]), 0.5) for d in (0.0, 0.5, 1.0, 2.0)]
        assert values == sorted(values, reverse=True)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DataError, match="dimension"):
            rbf(np.zeros(2), np.zeros(3), 1.0)

    def test_gamma_validated(self):
        with pytest.raises(DataError):
            rbf(np.zeros(2), np.zeros(2), 0.0)


class TestCombinedKernel:
    def test_rank_only_linear(self):
        e_i = Example(query_id="q", candidate_id="a", label=1,
                      original_rank=2, rank_value=0.5)
        e_j = Example(query_id="q", candidate_id="b", label=-1,
                      original_rank=4, rank_value=0.25)
        cfg = KernelConfig(use_sim=False, use_rank=True, rank_kernel="LINEAR")
        assert combined_kernel(e_i, e_j, cfg) == pytest.approx(0.125)

    def test_sim_only_identical_vectors(self):
        v = np.array([0.1, 0.9, 0.5])
        e_i = Example(query_id="q", candidate_id="a", label=1,
                      original_rank=1, vec=v)
        e_j = Example(query_id="q", candidate_id="b", label=1,
                      original_rank=2, vec=v.copy())
        assert combined_kernel(e_i, e_j, KernelConfig()) == pytest.approx(1.0)

    def test_additivity_of_blocks(self):
        rng = make_rng(53)
        ex = make_examples(rng, 3)
        full = KernelConfig(use_sim=True, use_tk=True, use_rank=True,
                            rank_kernel="LINEAR", tk_kind="PTK")
        parts = [
            KernelConfig(use_sim=True, use_tk=False, use_rank=False),
            KernelConfig(use_sim=False, use_tk=True, use_rank=False,
                         tk_kind="PTK"),
            KernelConfig(use_sim=False, use_tk=False, use_rank=True,
                         rank_kernel="LINEAR"),
        ]
        G_full = gram_matrix(ex, full)
        G_sum = sum(gram_matrix(ex, p) for p in parts)
        np.testing.assert_allclose(G_full, G_sum, atol=1e-9)

    def test_missing_enabled_block_is_named(self):
        e = Example(query_id="q", candidate_id="a", label=1, original_rank=1,
                    vec=np.zeros(2))
        cfg = KernelConfig(use_sim=False, use_rank=True)
        with pytest.raises(DataError, match="rank block"):
            combined_kernel(e, e, cfg)

    def test_explicit_gamma_respected(self):
        e_i = Example(query_id="q", candidate_id="a", label=1,
                      original_rank=1, vec=np.array([0.0]))
        e_j = Example(query_id="q", candidate_id="b", label=1,
                      original_rank=2, vec=np.array([1.0]))
        cfg = KernelConfig(gamma=2.0)
        assert combined_kernel(e_i, e_j, cfg) == pytest.approx(math.exp(-2.0))


class TestGramMatrix:
    def test_single_example(self):
        rng = make_rng(61)
        ex = make_examples(rng, 1)
        G = gram_matrix(ex, KernelConfig())
        assert G.shape == (1, 1)
        assert G[0, 0] == pytest.approx(1.0)

    def test_exact_symmetry(self):
        rng = make_rng(67)
        ex = make_examples(rng, 10)
        cfg = KernelConfig(use_sim=True, use_tk=True, use_rank=True)
        G = gram_matrix(ex, cfg)
        assert np.array_equal(G, G.T)

    @pytest.mark.parametrize("cfg", [
        KernelConfig(use_sim=True, use_tk=False, use_rank=False),
        KernelConfig(use_sim=False, use_tk=True, use_rank=False, tk_kind="STK"),
        KernelConfig(use_sim=False, use_tk=True, use_rank=False, tk_kind="PTK"),
        KernelConfig(use_sim=False, use_tk=False, use_rank=True,
                     rank_kernel="LINEAR"),
        KernelConfig(use_sim=True, use_tk=True, use_rank=True,
                     rank_kernel="RBF"),
    ])
    def test_positive_semidefinite(self, cfg):
        rng = make_rng(71)
        ex = make_examples(rng, 20)
        G = gram_matrix(ex, cfg)
        min_eig = np.linalg.eigvalsh(G).min()
        assert min_eig >= -1e-8 * np.linalg.norm(G)

    def test_empty_list_rejected(self):
        with pytest.raises(DataError):
            gram_matrix([], KernelConfig())

    def test_rectangular_matches_square(self):
        rng = make_rng(73)
        ex = make_examples(rng, 6)
        cfg = KernelConfig(use_sim=True, use_tk=True, use_rank=True)
        G = gram_matrix(ex, cfg)
        K = kernel_matrix(ex[:2], ex, cfg)
        np.testing.assert_allclose(K, G[:2], atol=1e-12)


class TestGramFile:
    def test_round_trip(self, tmp_path):
        rng = make_rng(79)
        ex = make_examples(rng, 7, with_trees=False)
        cfg = KernelConfig()
        G = gram_matrix(ex, cfg)
        fp = config_fingerprint(cfg)
        path = tmp_path / "gram.txt"
        save_gram(path, G, fp)
        G2, fp2 = load_gram(path)
        assert fp2 == fp
        np.testing.assert_array_equal(G, G2)

    def test_not_a_gram_file(self, tmp_path):
        path = tmp_path / "bogus.txt"
        path.write_text("hello\n", encoding="utf-8")
        with pytest.raises(DataError, match="not a gram cache"):
            load_gram(path)

    def test_truncated_file_rejected(self, tmp_path):
        rng = make_rng(83)
        ex = make_examples(rng, 4, with_trees=False)
        G = gram_matrix(ex, KernelConfig())
        path = tmp_path / "gram.txt"
        save_gram(path, G, "fp")
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(DataError, match="rows"):
            load_gram(path)


class TestConfigFingerprint:
    def test_stable(self):
        cfg = KernelConfig()
        assert config_fingerprint(cfg) == config_fingerprint(KernelConfig())

    def test_sensitive_to_every_field(self):
        base = config_fingerprint(KernelConfig())
        variants = [
            KernelConfig(lam=0.5),
            KernelConfig(mu=0.3),
            KernelConfig(gamma=1.0),
            KernelConfig(tk_kind="STK"),
            KernelConfig(rank_kernel="RBF"),
            KernelConfig(vec_kernel="LINEAR"),
            KernelConfig(normalize_tk=False),
            KernelConfig(use_tk=True),
            KernelConfig(use_rank=True),
        ]
        prints = {config_fingerprint(v) for v in variants}
        assert base not in prints
        assert len(prints) == len(variants)


class TestExampleValidation:
    def test_bad_label_rejected(self):
        with pytest.raises(DataError):
            Example(query_id="q", candidate_id="c", label=0, original_rank=1)

    def test_bad_rank_rejected(self):
        with pytest.raises(DataError):
            Example(query_id="q", candidate_id="c", label=1, original_rank=0)

    def test_non_finite_vec_rejected(self):
        with pytest.raises(DataError):
            Example(query_id="q", candidate_id="c", label=1, original_rank=1,
                    vec=np.array([1.0, np.nan]))
