"""Friedman test on per-domain ranks and the Nemenyi critical difference."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np
from scipy import special, stats

from .errors import MalformedScoreMatrix, UnsupportedAlpha, UnsupportedK

# Critical values of the two-tailed Nemenyi test: studentized range quantile
# at infinite degrees of freedom divided by sqrt(2), for k = 2..20.
NEMENYI_Q = {
    0.05: {
        2: 1.9600, 3: 2.3437, 4: 2.5690, 5: 2.7278, 6: 2.8497, 7: 2.9483, 8: 3.0309,
        9: 3.1017, 10: 3.1637, 11: 3.2187, 12: 3.2680, 13: 3.3127, 14: 3.3536,
        15: 3.3912, 16: 3.4260, 17: 3.4584, 18: 3.4887, 19: 3.5171, 20: 3.5438,
    },
    0.10: {
        2: 1.6449, 3: 2.0523, 4: 2.2913, 5: 2.4595, 6: 2.5885, 7: 2.6927, 8: 2.7799,
        9: 2.8546, 10: 2.9199, 11: 2.9778, 12: 3.0297, 13: 3.0767, 14: 3.1197,
        15: 3.1592, 16: 3.1957, 17: 3.2297, 18: 3.2615, 19: 3.2912, 20: 3.3192,
    },
}


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """``scores[i, j]`` is method ``i`` on domain ``j``; higher is better.

    ``text`` optionally keeps the cell strings as read, so averages can be
    computed in exact decimal arithmetic.
    """

    methods: tuple[str, ...]
    domains: tuple[str, ...]
    scores: np.ndarray
    text: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (len(self.methods), len(self.domains)):
            raise MalformedScoreMatrix(f"score shape {s.shape} does not match {len(self.methods)} methods x {len(self.domains)} domains")
        if len(self.methods) < 2 or len(self.domains) < 2:
            raise MalformedScoreMatrix("need at least 2 methods and 2 domains")
        if not np.all(np.isfinite(s)):
            raise MalformedScoreMatrix("score matrix has missing or non-finite cells")
        if len(set(self.methods)) != len(self.methods):
            raise MalformedScoreMatrix("duplicate method names")
        object.__setattr__(self, "scores", s)

    @property
    def k(self):
        return len(self.methods)

    @property
    def n(self):
        return len(self.domains)

    def transposed(self) -> "ScoreMatrix":
        text = tuple(zip(*self.text)) if self.text is not None else None
        return ScoreMatrix(self.domains, self.methods, self.scores.T, text)


def read_score_matrix(path) -> ScoreMatrix:
    """CSV with a header of domain names and the method name in the first column."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise MalformedScoreMatrix(f"{path}: need a header row and at least one method row")
    domains = tuple(c.strip() for c in rows[0][1:])
    methods, text, values = [], [], []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(domains) + 1:
            raise MalformedScoreMatrix(f"{path}:{n}: expected {len(domains) + 1} columns, got {len(row)}")
        cells = tuple(c.strip() for c in row[1:])
        try:
            values.append([float(c) for c in cells])
        except ValueError:
            raise MalformedScoreMatrix(f"{path}:{n}: non-numeric score in {list(cells)}") from None
        methods.append(row[0].strip())
        text.append(cells)
    return ScoreMatrix(tuple(methods), domains, np.array(values), tuple(text))


def rank_per_domain(matrix: ScoreMatrix) -> np.ndarray:
    """Rank methods within each domain column; 1 is best, ties share the mean rank."""
    return np.column_stack([stats.rankdata(-matrix.scores[:, j], method="average") for j in range(matrix.n)])


def has_ties(matrix: ScoreMatrix) -> bool:
    return any(len(np.unique(matrix.scores[:, j])) < matrix.k for j in range(matrix.n))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)."""
    if x < 0:
        raise ValueError("x must be >= 0")
    if df < 1:
        raise ValueError("df must be a positive integer")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True, eq=False)
class FriedmanResult:
    average_ranks: np.ndarray
    chi_square: float
    degrees_of_freedom: int
    p_value: float
    k: int
    n: int
    ties: bool

    def to_dict(self, methods=None):
        d = {
            "average_ranks": self.average_ranks.tolist(),
            "chi_square": self.chi_square,
            "df": self.degrees_of_freedom,
            "p_value": self.p_value,
            "ties": self.ties,
        }
        if methods is not None:
            d["average_ranks"] = dict(zip(methods, self.average_ranks.tolist()))
        return d


def friedman_statistic(average_ranks, n: int) -> float:
    k = len(average_ranks)
    r = np.asarray(average_ranks, dtype=np.float64)
    return 12.0 * n / (k * (k + 1)) * float(np.sum(r * r)) - 3.0 * n * (k + 1)


def friedman(matrix: ScoreMatrix) -> FriedmanResult:
    """Friedman chi-square on average ranks, without tie correction."""
    ranks = rank_per_domain(matrix)
    avg = ranks.mean(axis=1)
    chi = max(friedman_statistic(avg, matrix.n), 0.0)
    df = matrix.k - 1
    return FriedmanResult(avg, chi, df, chi2_sf(chi, df), matrix.k, matrix.n, has_ties(matrix))


def friedman_tie_corrected(matrix: ScoreMatrix) -> FriedmanResult:
    """Friedman statistic divided by ``1 - sum(t^3 - t) / (N (k^3 - k))``."""
    base = friedman(matrix)
    k, n = matrix.k, matrix.n
    tie_sum = 0
    for j in range(n):
        _, counts = np.unique(matrix.scores[:, j], return_counts=True)
        tie_sum += int(np.sum(counts.astype(np.int64) ** 3 - counts))
    denom = 1.0 - tie_sum / (n * (k ** 3 - k))
    chi = base.chi_square / denom if denom > 0 else 0.0
    return FriedmanResult(base.average_ranks, chi, base.degrees_of_freedom, chi2_sf(chi, k - 1), k, n, base.ties)


def iman_davenport(result: FriedmanResult) -> tuple[float, float]:
    """F statistic and p-value of the Iman-Davenport correction."""
    k, n, chi = result.k, result.n, result.chi_square
    denom = n * (k - 1) - chi
    if denom <= 0:
        return math.inf, 0.0
    f = (n - 1) * chi / denom
    return f, float(stats.f.sf(f, k - 1, (k - 1) * (n - 1)))


def tie_resolution_envelope(matrix: ScoreMatrix, limit=1_000_000):
    """Extreme untied p-values over every way of breaking ties.

    Returns ``None`` when the number of tie orderings exceeds ``limit``.
    """
    columns = []
    total = 1
    for j in range(matrix.n):
        col = matrix.scores[:, j]
        levels = sorted(set(col.tolist()), reverse=True)
        groups = [[i for i in range(matrix.k) if col[i] == v] for v in levels]
        options = []
        for perms in itertools.product(*(itertools.permutations(g) for g in groups)):
            r = np.empty(matrix.k)
            pos = 1
            for perm in perms:
                for i in perm:
                    r[i] = pos
                    pos += 1
            options.append(r)
        columns.append(options)
        total *= len(options)
        if total > limit:
            return None
    best_chi, worst_chi = -math.inf, math.inf
    for combo in itertools.product(*columns):
        avg = np.mean(combo, axis=0)
        chi = friedman_statistic(avg, matrix.n)
        best_chi, worst_chi = max(best_chi, chi), min(worst_chi, chi)
    df = matrix.k - 1
    return {
        "orderings": total,
        "p_min": chi2_sf(best_chi, df),
        "p_max": chi2_sf(max(worst_chi, 0.0), df),
        "chi_square_max": best_chi,
        "chi_square_min": worst_chi,
    }


@dataclass(frozen=True)
class NemenyiResult:
    critical_difference: float
    q_alpha: float
    alpha: float
    significant_pairs: frozenset


def nemenyi_q(k: int, alpha: float = 0.05) -> float:
    table = None
    for a, t in NEMENYI_Q.items():
        if math.isclose(alpha, a):
            table = t
    if table is None:
        raise UnsupportedAlpha(f"alpha {alpha} not tabulated; use one of {sorted(NEMENYI_Q)}")
    if k not in table:
        raise UnsupportedK(f"k = {k} outside the tabulated range 2-20")
    return table[k]


def critical_difference(k: int, n: int, alpha: float = 0.05) -> float:
    return nemenyi_q(k, alpha) * math.sqrt(k * (k + 1) / (6.0 * n))


def nemenyi(result: FriedmanResult, k: int | None = None, n: int | None = None, alpha: float = 0.05, methods=None) -> NemenyiResult:
    """Pairs whose average-rank gap reaches the critical difference.

    Pairs are unordered ``frozenset`` objects of method names (or indices).
    """
    k = result.k if k is None else k
    n = result.n if n is None else n
    q = nemenyi_q(k, alpha)
    cd = q * math.sqrt(k * (k + 1) / (6.0 * n))
    names = list(methods) if methods is not None else list(range(k))
    pairs = set()
    for a, b in itertools.combinations(range(k), 2):
        if abs(result.average_ranks[a] - result.average_ranks[b]) >= cd:
            pairs.add(frozenset((names[a], names[b])))
    return NemenyiResult(cd, q, alpha, frozenset(pairs))


def _round_half_up(value: Fraction, places: int) -> str:
    quantum = Decimal(1).scaleb(-places)
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return str(exact.quantize(quantum, rounding=ROUND_HALF_UP))


def average_scores(matrix: ScoreMatrix, places: int = 2) -> dict[str, dict]:
    """Per-method mean over domains, exact when the cell text is known.

    Rounded half-up on the exact mean so that printed averages such as
    ``(0.89+0.91+0.71+0.56+0.70+0.58)/6 = 0.725`` round to ``0.73``.
    """
    out = {}
    for i, method in enumerate(matrix.methods):
        if matrix.text is not None:
            exact = sum((Fraction(Decimal(c)) for c in matrix.text[i]), Fraction(0)) / matrix.n
        else:
            exact = sum((Fraction(float(v)) for v in matrix.scores[i]), Fraction(0)) / matrix.n
        out[method] = {"mean": float(exact), "rounded": _round_half_up(exact, places)}
    return out


def compare_report(matrix: ScoreMatrix, alpha: float = 0.05, places: int = 2) -> dict:
    """Everything the ``compare`` command writes."""
    result = friedman(matrix)
    tie = friedman_tie_corrected(matrix)
    f_id, p_id = iman_davenport(result)
    transposed = friedman(matrix.transposed()) if matrix.n >= 2 else None
    report = {
        "higher_is_better": True,
        "methods": list(matrix.methods),
        "domains": list(matrix.domains),
        "k": matrix.k,
        "n": matrix.n,
        "ranks": {m: r.tolist() for m, r in zip(matrix.methods, rank_per_domain(matrix))},
        "average_ranks": dict(zip(matrix.methods, result.average_ranks.tolist())),
        "chi_square": result.chi_square,
        "df": result.degrees_of_freedom,
        "p_value": result.p_value,
        "ties": result.ties,
        "tied_domains": [d for j, d in enumerate(matrix.domains) if len(np.unique(matrix.scores[:, j])) < matrix.k],
        "average_scores": average_scores(matrix, places),
        "variants": {
            "untied": {"chi_square": result.chi_square, "p_value": result.p_value},
            "tie_corrected": {"chi_square": tie.chi_square, "p_value": tie.p_value},
            "iman_davenport": {"f": f_id, "p_value": p_id, "df": [matrix.k - 1, (matrix.k - 1) * (matrix.n - 1)]},
            "transposed_orientation": {
                "description": "domains ranked within each method (rows and columns swapped)",
                "chi_square": transposed.chi_square,
                "p_value": transposed.p_value,
                "tie_corrected_p_value": friedman_tie_corrected(matrix.transposed()).p_value,
            },
            "tie_resolution_envelope": tie_resolution_envelope(matrix),
        },
    }
    try:
        nem = nemenyi(result, alpha=alpha, methods=matrix.methods)
        report["nemenyi"] = {
            "alpha": alpha,
            "q_alpha": nem.q_alpha,
            "critical_difference": nem.critical_difference,
            "significant_pairs": sorted(sorted(p) for p in nem.significant_pairs),
        }
    except UnsupportedK as exc:
        report["nemenyi"] = {"alpha": alpha, "error": str(exc)}
    return report
