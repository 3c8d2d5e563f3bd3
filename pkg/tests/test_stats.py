import itertools

import numpy as np
import pytest
import scipy.stats

from pwpipe.acquisition import FormatError
from pwpipe.stats import (
    CRITERIA,
    LIKERT_MAX,
    METHODS,
    ScoreTable,
    anova_power,
    average_readers,
    chi2_sf,
    friedman_test,
    friedman_test_exact,
    load_score_table,
    mean_ranks,
    nemenyi_posthoc,
    ncf_sf,
    sample_size,
    studentized_range_cdf,
    studentized_range_sf,
)

# ------------------------------------------------------------- oracles


def _friedman_oracle(blocks):
    """Statistic recomputed from the textbook tie-corrected rank formula,
    ranking each block independently with scipy's rankdata."""
    b = np.asarray(blocks, dtype=np.float64)
    n, k = b.shape
    ranks = np.vstack([scipy.stats.rankdata(row) for row in b])
    col = ranks.sum(axis=0)
    a_term = float(np.sum(ranks**2))
    c_term = n * k * (k + 1) ** 2 / 4.0
    denom = a_term - c_term
    if denom <= 0:
        return 0.0
    return (k - 1) * float(np.sum((col - n * (k + 1) / 2.0) ** 2)) / denom


def _exact_tail_oracle(blocks):
    """Brute-force permutation null: every within-block ordering of the
    observed values, equally likely."""
    b = np.asarray(blocks, dtype=np.float64)
    n, k = b.shape
    observed = _friedman_oracle(b)
    total = 0
    hits = 0
    for perms in itertools.product(itertools.permutations(range(k)), repeat=n):
        table = np.vstack([b[i, list(p)] for i, p in enumerate(perms)])
        total += 1
        if _friedman_oracle(table) >= observed - 1e-9:
            hits += 1
    return hits / total


# ------------------------------------------------------------- friedman


def test_friedman_hand_example_three_blocks():
    # classic 3x3 table with perfect agreement across blocks:
    # chi2 = 6.0, p = exp(-3) ~ 0.0498
    blocks = np.array([[1.0, 2.0, 3.0], [1.5, 2.5, 3.5], [0.2, 0.4, 0.9]])
    stat, p = friedman_test(blocks)
    assert stat == pytest.approx(6.0, abs=1e-12)
    assert p == pytest.approx(0.0498, abs=1e-3)
    assert p == pytest.approx(np.exp(-3.0), rel=1e-10)


def test_friedman_matches_scipy_without_ties():
    rng = np.random.default_rng(0)
    for _ in range(5):
        blocks = rng.normal(size=(12, 4))
        stat, p = friedman_test(blocks)
        ref = scipy.stats.friedmanchisquare(*blocks.T)
        assert stat == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_friedman_tie_correction_against_rank_formula():
    blocks = np.array([
        [1.0, 1.0, 2.0, 3.0],
        [2.0, 2.0, 2.0, 1.0],
        [0.5, 0.7, 0.7, 0.5],
        [3.0, 1.0, 2.0, 2.0],
    ])
    stat, _ = friedman_test(blocks)
    assert stat == pytest.approx(_friedman_oracle(blocks), rel=1e-12)


def test_friedman_all_tied_rows_degenerate():
    blocks = np.ones((5, 3))
    stat, p = friedman_test(blocks)
    assert stat == 0.0
    assert p == 1.0


def test_friedman_input_validation():
    with pytest.raises(ValueError):
        friedman_test(np.ones((1, 4)))
    with pytest.raises(ValueError):
        friedman_test(np.ones((4, 1)))


def test_chi2_sf_known_values():
    assert chi2_sf(6.0, 2) == pytest.approx(np.exp(-3.0), rel=1e-12)
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(11.34, 3) == pytest.approx(0.01, abs=2e-4)


# ------------------------------------------------------------- exact mode


def test_exact_permutation_matches_brute_force_enumeration():
    rng = np.random.default_rng(1)
    for n, k in [(2, 3), (3, 3), (2, 4)]:
        blocks = rng.normal(size=(n, k))
        _, p = friedman_test_exact(blocks)
        ref = _exact_tail_oracle(blocks)
        assert p == pytest.approx(ref, abs=1e-12), (n, k)


def test_exact_permutation_with_ties_matches_brute_force():
    blocks = np.array([[1.0, 1.0, 2.0], [2.0, 0.0, 0.0], [0.5, 0.5, 0.5]])
    _, p = friedman_test_exact(blocks)
    assert p == pytest.approx(_exact_tail_oracle(blocks), abs=1e-12)


def test_exact_mode_agrees_with_chi2_decisions_small_n():
    # same accept/reject decision at alpha = 0.05 on clearly separated and
    # clearly null tables for every n the exact mode accepts
    rng = np.random.default_rng(2)
    for n in range(4, 9):
        dominant = np.column_stack([
            rng.normal(3.0, 0.1, n), rng.normal(2.0, 0.1, n),
            rng.normal(1.0, 0.1, n), rng.normal(0.0, 0.1, n),
        ])
        s1, p_chi = friedman_test(dominant)
        s2, p_ex = friedman_test_exact(dominant)
        assert s1 == pytest.approx(s2, rel=1e-12)
        assert (p_chi < 0.05) == (p_ex < 0.05) or n < 5, (n, p_chi, p_ex)

        flat = rng.normal(0.0, 1.0, (n, 4))
        _, q_chi = friedman_test(flat)
        _, q_ex = friedman_test_exact(flat)
        if min(q_chi, q_ex) > 0.2:  # away from the boundary the modes agree
            assert (q_chi < 0.05) == (q_ex < 0.05)


def test_exact_mode_rejects_large_n():
    with pytest.raises(ValueError):
        friedman_test_exact(np.zeros((9, 3)))


def test_dominant_treatment_table_is_significant():
    rng = np.random.default_rng(3)
    n, k = 20, 4
    base = rng.normal(0.0, 0.3, (n, k))
    base[:, 2] += 2.0  # one clearly better method
    _, p = friedman_test(base)
    assert p < 0.01


# ------------------------------------------------------------- studentized range


def test_studentized_range_cdf_matches_scipy():
    for k in (3, 4, 6):
        for q in (0.5, 1.5, 2.5, 3.5, 5.0):
            got = studentized_range_cdf(q, k)
            ref = scipy.stats.studentized_range.cdf(q, k, np.inf)
            assert got == pytest.approx(ref, abs=1e-6), (k, q)


def test_studentized_range_k2_closed_form():
    # k = 2: the range of two standard normals is |z1 - z2|,
    # so P(Q <= q) = 2 Phi(q / sqrt(2)) - 1
    from scipy.special import ndtr

    for q in (0.3, 1.0, 2.2, 4.0):
        assert studentized_range_cdf(q, 2) == pytest.approx(
            2.0 * ndtr(q / np.sqrt(2.0)) - 1.0, abs=1e-9)


def test_studentized_range_edge_cases():
    assert studentized_range_cdf(0.0, 4) == 0.0
    assert studentized_range_cdf(-1.0, 4) == 0.0
    assert studentized_range_sf(1.0, 3) == pytest.approx(
        1.0 - studentized_range_cdf(1.0, 3), abs=1e-12)


# ------------------------------------------------------------- nemenyi


def test_nemenyi_matrix_shape_and_symmetry():
    rng = np.random.default_rng(4)
    blocks = rng.normal(size=(10, 4))
    p = nemenyi_posthoc(blocks)
    assert p.shape == (4, 4)
    np.testing.assert_array_equal(np.diag(p), np.ones(4))
    np.testing.assert_allclose(p, p.T, atol=0)
    assert np.all((p >= 0) & (p <= 1))


def test_nemenyi_flags_separated_pair():
    rng = np.random.default_rng(5)
    n = 15
    blocks = np.column_stack([
        rng.normal(0.0, 0.1, n), rng.normal(0.1, 0.1, n),
        rng.normal(0.2, 0.1, n), rng.normal(3.0, 0.1, n),
    ])
    p = nemenyi_posthoc(blocks)
    assert p[0, 3] < 0.01  # extremes clearly differ
    assert p[0, 1] > p[0, 3]


def test_nemenyi_agrees_with_hand_formula():
    rng = np.random.default_rng(6)
    blocks = rng.normal(size=(8, 3))
    ranks = mean_ranks(blocks)
    n, k = blocks.shape
    q01 = abs(ranks[0] - ranks[1]) / np.sqrt(k * (k + 1) / (12.0 * n))
    p = nemenyi_posthoc(blocks)
    assert p[0, 1] == pytest.approx(
        float(scipy.stats.studentized_range.sf(q01, k, np.inf)), abs=1e-6)


def test_mean_ranks_hand_example():
    blocks = np.array([[10.0, 20.0, 30.0], [1.0, 3.0, 2.0]])
    np.testing.assert_allclose(mean_ranks(blocks), [1.0, 2.5, 2.5])


# ------------------------------------------------------------- power / sample size


def test_ncf_sf_matches_scipy():
    for x, df1, df2, lam in [(2.0, 3, 60, 5.0), (3.5, 3, 30, 11.0), (1.2, 5, 100, 2.0)]:
        assert ncf_sf(x, df1, df2, lam) == pytest.approx(
            float(scipy.stats.ncf.sf(x, df1, df2, lam)), abs=1e-8)


def test_anova_power_increases_with_n_and_effect():
    p10 = anova_power(10, 4, 0.35, 0.05)
    p20 = anova_power(20, 4, 0.35, 0.05)
    p20_big = anova_power(20, 4, 0.5, 0.05)
    assert p10 < p20 < p20_big
    assert 0.0 < p10 < 1.0


def test_sample_size_medium_effect_lands_in_twenties():
    n = sample_size(0.35, 0.05, 0.8, 4)
    assert 20 <= n <= 28
    # minimality: one fewer subject misses the power target
    assert anova_power(n, 4, 0.35, 0.05) >= 0.8
    assert anova_power(n - 1, 4, 0.35, 0.05) < 0.8


def test_sample_size_monotone_in_effect():
    assert sample_size(0.5, 0.05, 0.8, 4) < sample_size(0.25, 0.05, 0.8, 4)


def test_sample_size_validation():
    with pytest.raises(ValueError):
        sample_size(0.0, 0.05, 0.8, 4)
    with pytest.raises(ValueError):
        sample_size(0.35, 0.05, 1.5, 4)
    with pytest.raises(ValueError):
        sample_size(0.35, 0.05, 0.8, 1)
    with pytest.raises(ValueError):
        sample_size(1e-6, 0.05, 0.8, 4, n_max=50)


# ------------------------------------------------------------- score tables


def _write_scores(path, n_readers=2, n_sets=3, flip=False):
    lines = ["reader image_set method criterion score"]
    rng = np.random.default_rng(7)
    for r in range(n_readers):
        for s in range(n_sets):
            for m in METHODS:
                for c in CRITERIA:
                    score = int(rng.integers(0, LIKERT_MAX + 1))
                    lines.append(f"{r} {s} {m} {c} {score}")
    path.write_text("\n".join(lines) + "\n")


def test_score_table_load_and_average(tmp_path):
    p = tmp_path / "scores.txt"
    _write_scores(p)
    table = load_score_table(p)
    assert table.scores.shape == (2, 3, len(METHODS), len(CRITERIA))
    avg = average_readers(table)
    assert avg.shape == (3, len(METHODS), len(CRITERIA))
    np.testing.assert_allclose(avg, table.scores.mean(axis=0))


def test_score_table_rejects_incomplete(tmp_path):
    p = tmp_path / "scores.txt"
    _write_scores(p)
    lines = p.read_text().strip().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError):
        load_score_table(p)


def test_score_table_rejects_bad_fields(tmp_path):
    p = tmp_path / "scores.txt"
    p.write_text("0 0 not_a_method speckle 1\n")
    with pytest.raises(FormatError):
        load_score_table(p)
    p.write_text("0 0 stage1 speckle 9\n")
    with pytest.raises(FormatError):
        load_score_table(p)


def test_score_table_validation():
    with pytest.raises(ValueError):
        ScoreTable(scores=np.zeros((2, 3, 2, 2), dtype=np.int64))  # wrong methods dim
    with pytest.raises(ValueError):
        ScoreTable(scores=np.full((2, 3, 4, 2), 99, dtype=np.int64))
