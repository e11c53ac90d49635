"""Two-tailed Wilcoxon signed-rank test with an exact small-sample null.

Zero differences are dropped; tied absolute differences get average ranks.
For n <= 25 the p-value comes from exact enumeration of the null
distribution (dynamic program over doubled ranks, which are integers even
with ties); above that, a normal approximation with tie correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ComparisonResult", "wilcoxon_signed_rank"]

EXACT_LIMIT = 25


@dataclass(frozen=True)
class ComparisonResult:
    a: tuple[float, ...]
    b: tuple[float, ...]
    n_effective: int
    w_statistic: float
    p_value: float
    significant_at_0_05: bool
    method: str  # "exact" or "normal"


def _signed_ranks(diffs: np.ndarray):
    """Average ranks of |d|, returned doubled so ties stay integral."""
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    doubled = np.zeros(len(diffs), dtype=np.int64)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        # positions i..j (0-based) share rank (i+1 + j+1) / 2; doubled: i+j+2
        for p in range(i, j + 1):
            doubled[order[p]] = i + j + 2
        i = j + 1
    return doubled


def _exact_p(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    """Two-tailed exact p for W = min(W+, W-) via the null distribution of
    2*W+ under independent fair signs."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for dr in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[dr:] = counts[: total + 1 - dr]
        counts = counts + shifted
    denom = float(2 ** len(doubled_ranks))
    p_low = float(counts[: doubled_w + 1].sum()) / denom
    p_high = float(counts[total - doubled_w :].sum()) / denom
    return min(1.0, p_low + p_high)


def wilcoxon_signed_rank(a, b) -> ComparisonResult:
    """Paired two-tailed test of median difference; see module docstring."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("wilcoxon needs two equal-length 1-D samples")
    diffs = a - b
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        raise ValueError("degenerate paired sample: all differences are zero")
    doubled = _signed_ranks(diffs)
    w_plus2 = int(doubled[diffs > 0].sum())
    w_minus2 = int(doubled[diffs < 0].sum())
    w2 = min(w_plus2, w_minus2)
    w = w2 / 2.0
    if n <= EXACT_LIMIT:
        p = _exact_p(doubled, w2)
        method = "exact"
    else:
        mu = n * (n + 1) / 4.0
        # Tie correction: sum(t^3 - t) / 48 over tie groups.
        _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
        tie_term = float(((tie_counts**3) - tie_counts).sum()) / 48.0
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        if sigma2 <= 0.0:
            p = 1.0
        else:
            z = (w - mu) / math.sqrt(sigma2)
            p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "normal"
    return ComparisonResult(
        a=tuple(float(x) for x in a),
        b=tuple(float(x) for x in b),
        n_effective=n,
        w_statistic=w,
        p_value=p,
        significant_at_0_05=p < 0.05,
        method=method,
    )
