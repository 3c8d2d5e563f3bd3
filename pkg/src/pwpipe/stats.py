"""Reader-study analytics: score tables, Friedman ANOVA (chi-square and
exact-permutation forms), Nemenyi post-hoc pairwise comparisons, and the
noncentral-F power computation behind the sample-size estimate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import betainc, betaincinv, gammaincc, ndtr

from .acquisition import FormatError

METHODS = ("pw_input", "pwc_filtered", "stage1", "stage2")
CRITERIA = ("speckle", "structural_fidelity")
LIKERT_MAX = 3


@dataclass(frozen=True)
class ScoreTable:
    """scores[reader, image_set, method, criterion], Likert integers 0..3."""

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores)
        if s.ndim != 4:
            raise ValueError(f"scores must be 4-D, got shape {s.shape}")
        if s.shape[2] != len(METHODS) or s.shape[3] != len(CRITERIA):
            raise ValueError(
                f"scores must have {len(METHODS)} methods and {len(CRITERIA)} criteria, "
                f"got shape {s.shape}"
            )
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError("need at least one reader and one image set")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise ValueError("scores must be integers")
            s = s.astype(np.int64)
        if s.min() < 0 or s.max() > LIKERT_MAX:
            raise ValueError(f"scores must lie in 0..{LIKERT_MAX}")
        object.__setattr__(self, "scores", s)

    @property
    def reader_count(self) -> int:
        return self.scores.shape[0]

    @property
    def set_count(self) -> int:
        return self.scores.shape[1]


def average_readers(table: ScoreTable) -> np.ndarray:
    """Mean across the reader axis -> (image_set, method, criterion)."""
    return np.asarray(table.scores, dtype=np.float64).mean(axis=0)


def load_score_table(path) -> ScoreTable:
    """Delimited text with columns reader set method criterion score.

    Separator is any whitespace or commas; methods/criteria are referenced by
    name; blocks must be complete.
    """
    cells: dict[tuple[int, int, int, int], int] = {}
    readers: set[int] = set()
    sets: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip().replace(",", " ")
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "reader":  # header row
                continue
            if len(tok) != 5:
                raise FormatError(f"line {lineno}: expected 5 fields, got {len(tok)}")
            try:
                reader, img_set = int(tok[0]), int(tok[1])
                score = int(tok[4])
            except ValueError as err:
                raise FormatError(f"line {lineno}: {err}") from err
            if tok[2] not in METHODS:
                raise FormatError(f"line {lineno}: unknown method {tok[2]!r}")
            if tok[3] not in CRITERIA:
                raise FormatError(f"line {lineno}: unknown criterion {tok[3]!r}")
            key = (reader, img_set, METHODS.index(tok[2]), CRITERIA.index(tok[3]))
            if key in cells:
                raise FormatError(f"line {lineno}: duplicate cell {key}")
            cells[key] = score
            readers.add(reader)
            sets.add(img_set)
    if not cells:
        raise FormatError("score file holds no data rows")
    r_ids = sorted(readers)
    s_ids = sorted(sets)
    scores = np.full((len(r_ids), len(s_ids), len(METHODS), len(CRITERIA)), -1, dtype=np.int64)
    for (reader, img_set, m, c), score in cells.items():
        scores[r_ids.index(reader), s_ids.index(img_set), m, c] = score
    if (scores < 0).any():
        raise FormatError("incomplete score table: some reader/set/method/criterion missing")
    return ScoreTable(scores=scores)


# ---------------------------------------------------------------------------
# Friedman test


def _midranks(row: np.ndarray) -> np.ndarray:
    """Ranks 1..k with ties assigned the mean of the covered positions."""
    order = np.argsort(row, kind="stable")
    ranks = np.empty(len(row), dtype=np.float64)
    i = 0
    while i < len(row):
        j = i
        while j + 1 < len(row) and row[order[j + 1]] == row[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def chi2_sf(x: float, df: int) -> float:
    return float(gammaincc(df / 2.0, x / 2.0))


def _check_blocks(blocks) -> np.ndarray:
    b = np.asarray(blocks, dtype=np.float64)
    if b.ndim != 2:
        raise ValueError(f"blocks must be a 2-D n x k matrix, got shape {b.shape}")
    n, k = b.shape
    if n < 2 or k < 2:
        raise ValueError(f"need n >= 2 blocks and k >= 2 treatments, got {n} x {k}")
    return b


def _rank_stat(ranks: np.ndarray) -> float:
    """Tie-corrected Friedman statistic from a matrix of within-block ranks.

    With column rank sums R_j:  (k-1) * sum_j (R_j - n(k+1)/2)^2 / (A - C),
    A = sum of squared ranks, C = n k (k+1)^2 / 4.  Without ties this equals
    12/(n k (k+1)) * sum R_j^2 - 3 n (k+1).  A zero denominator means every
    block is fully tied; the statistic is defined as 0 there.
    """
    n, k = ranks.shape
    col = ranks.sum(axis=0)
    a = float(np.sum(ranks * ranks))
    c = n * k * (k + 1) ** 2 / 4.0
    if a - c <= 0.0:
        return 0.0
    dev = col - n * (k + 1) / 2.0
    return (k - 1) * float(np.sum(dev * dev)) / (a - c)


def friedman_test(blocks) -> tuple[float, float]:
    """Friedman rank ANOVA: (tie-corrected chi-square statistic, p-value
    from the chi-square upper tail with k-1 degrees of freedom)."""
    b = _check_blocks(blocks)
    ranks = np.vstack([_midranks(row) for row in b])
    stat = _rank_stat(ranks)
    if stat == 0.0:
        return 0.0, 1.0
    return stat, chi2_sf(stat, b.shape[1] - 1)


def friedman_test_exact(blocks, max_blocks: int = 8) -> tuple[float, float]:
    """Exact permutation p-value for small n.

    Under the null every within-block ordering is equally likely; the
    statistic depends on the rank matrix only through its column sums (the
    squared-rank total is permutation invariant), so the distribution is
    accumulated by convolving per-block column-sum contributions.
    """
    b = _check_blocks(blocks)
    n, k = b.shape
    if n > max_blocks:
        raise ValueError(f"exact mode limited to n <= {max_blocks}, got {n}")
    ranks = np.vstack([_midranks(row) for row in b])
    a = float(np.sum(ranks * ranks))
    c = n * k * (k + 1) ** 2 / 4.0
    observed = _rank_stat(ranks)
    if a - c <= 0.0:
        return 0.0, 1.0

    # distribution over column-sum vectors; ranks doubled to keep exact ints
    dist: dict[tuple[int, ...], float] = {tuple([0] * k): 1.0}
    for row in ranks:
        doubled = [int(round(2 * r)) for r in row]
        perms = sorted(set(itertools.permutations(doubled)))
        w = _mult(doubled)  # identical for every distinct value sequence
        layer: dict[tuple[int, ...], float] = {}
        for state, p in dist.items():
            pw = p * w
            for perm in perms:
                key = tuple(s + q for s, q in zip(state, perm))
                layer[key] = layer.get(key, 0.0) + pw
        dist = layer

    tail = 0.0
    center = n * (k + 1)  # doubled n(k+1)/2
    scale = (k - 1) / (4.0 * (a - c))  # doubled sums carry a factor 2
    for state, p in dist.items():
        dev2 = sum((s - center) ** 2 for s in state)
        stat = scale * dev2
        if stat >= observed - 1e-9:
            tail += p
    return observed, min(tail, 1.0)


def _mult(row: list[int]) -> float:
    """Probability of any one distinct value sequence when permuting ``row``
    uniformly: (product of tie-group factorials) / k!."""
    counts: dict[int, int] = {}
    for v in row:
        counts[v] = counts.get(v, 0) + 1
    ways = 1
    for v in counts.values():
        ways *= factorial(v)
    return ways / factorial(len(row))


# ---------------------------------------------------------------------------
# Studentized range (infinite dof) and the Nemenyi test


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _adaptive_simpson(f, lo: float, hi: float, tol: float) -> float:
    """Recursive Simpson on [lo, hi]; subdivides until the Richardson error
    estimate is below tol for each panel."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        x1 = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + x1)
        xr = 0.5 * (x1 + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, x1, f0, fl, f1)
        right = simpson(x1, x2, f1, fr, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(x0, x1, f0, fl, f1, left, tol / 2.0, depth - 1) + recurse(
            x1, x2, f1, fr, f2, right, tol / 2.0, depth - 1
        )

    mid = 0.5 * (lo + hi)
    f0, f1, f2 = f(lo), f(mid), f(hi)
    whole = simpson(lo, hi, f0, f1, f2)
    return recurse(lo, hi, f0, f1, f2, whole, tol, 48)


def studentized_range_cdf(q: float, k: int, tol: float = 1e-9) -> float:
    """P(range of k iid standard normals <= q), the infinite-dof form
    k * Int phi(z) [Phi(z) - Phi(z-q)]^(k-1) dz, by adaptive Simpson."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if q <= 0.0:
        return 0.0

    def integrand(z):
        return _phi(z) * (ndtr(z) - ndtr(z - q)) ** (k - 1)

    return min(1.0, k * _adaptive_simpson(integrand, -12.0, 12.0 + q, tol))


def studentized_range_sf(q: float, k: int, tol: float = 1e-9) -> float:
    return max(0.0, 1.0 - studentized_range_cdf(q, k, tol))


def nemenyi_posthoc(blocks) -> np.ndarray:
    """Pairwise p-value matrix over treatments.

    q_ij = |mean rank_i - mean rank_j| / sqrt(k(k+1)/(12 n)), referred to the
    studentized range distribution with infinite degrees of freedom.
    """
    b = _check_blocks(blocks)
    n, k = b.shape
    ranks = np.vstack([_midranks(row) for row in b])
    mean_ranks = ranks.mean(axis=0)
    se = np.sqrt(k * (k + 1) / (12.0 * n))
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            q = abs(mean_ranks[i] - mean_ranks[j]) / se
            p[i, j] = p[j, i] = studentized_range_sf(q, k)
    return p


def mean_ranks(blocks) -> np.ndarray:
    b = _check_blocks(blocks)
    return np.vstack([_midranks(row) for row in b]).mean(axis=0)


# ---------------------------------------------------------------------------
# Power analysis


def _f_critical(alpha: float, df1: int, df2: int) -> float:
    y = betaincinv(df1 / 2.0, df2 / 2.0, 1.0 - alpha)
    return df2 * y / (df1 * (1.0 - y))


def ncf_sf(x: float, df1: int, df2: int, lam: float, tol: float = 1e-13) -> float:
    """Upper tail of the noncentral F distribution via the Poisson-weighted
    incomplete-beta series."""
    if x <= 0.0:
        return 1.0
    y = df1 * x / (df1 * x + df2)
    half = lam / 2.0
    # Poisson weights iterated from j=0; continue until the remaining mass
    # cannot change the sum by more than tol
    log_w = -half
    w = np.exp(log_w)
    cdf = 0.0
    acc = 0.0
    j = 0
    while acc < 1.0 - tol:
        cdf += w * betainc(df1 / 2.0 + j, df2 / 2.0, y)
        acc += w
        j += 1
        w *= half / j
        if j > 100000:  # pragma: no cover - safety stop
            break
    return float(min(1.0, max(0.0, 1.0 - cdf)))


def anova_power(n: int, k: int, effect_size: float, alpha: float) -> float:
    """Power of the k-treatment repeated-measures F test with n subjects at
    Cohen effect size f: noncentrality n k f^2, df (k-1, (n-1)(k-1))."""
    df1 = k - 1
    df2 = (n - 1) * (k - 1)
    lam = n * k * effect_size**2
    crit = _f_critical(alpha, df1, df2)
    return ncf_sf(crit, df1, df2, lam)


def sample_size(
    effect_size: float, alpha: float, power: float, k_groups: int, n_max: int = 10000
) -> int:
    """Smallest n whose computed power reaches the target."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not 0.0 < power < 1.0:
        raise ValueError(f"power must be in (0, 1), got {power}")
    if effect_size <= 0.0:
        raise ValueError(f"effect_size must be > 0, got {effect_size}")
    if k_groups < 2:
        raise ValueError(f"k_groups must be >= 2, got {k_groups}")
    for n in range(2, n_max + 1):
        if anova_power(n, k_groups, effect_size, alpha) >= power:
            return n
    raise ValueError(f"target power {power} not reachable with n <= {n_max}")
