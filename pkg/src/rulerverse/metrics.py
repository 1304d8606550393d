"""Agreement and classification statistics, implemented from first principles.

Everything here is a pure function over immutable inputs.  Undefined results
(constant vectors, zero expected disagreement) are returned as None, never as
a sentinel number; aggregation layers skip them and report the skip count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import (
    EmptyInput,
    InsufficientOverlap,
    LabelError,
    LengthMismatch,
    MissingValue,
    NoCommonItems,
    TooFewItems,
)

Number = int | float


@dataclass(frozen=True)
class RatingVector:
    """One rater's scores over named items.

    `ids` must be unique.  A None score marks an item the rater skipped; the
    paired statistics below require fully observed, identically ordered
    vectors, so use `common_items` (or `pairwise_agreement`) to align raters
    first.
    """

    ids: tuple[str, ...]
    scores: tuple[Number | None, ...]
    rater_id: str = ""

    def __post_init__(self):
        if len(self.ids) != len(self.scores):
            raise LengthMismatch(
                f"{len(self.ids)} ids vs {len(self.scores)} scores"
            )
        if len(set(self.ids)) != len(self.ids):
            raise LengthMismatch("item ids must be unique")

    def common_items(self, other: "RatingVector") -> tuple[list[Number], list[Number]]:
        """Scores of both raters over the sorted intersection of rated items."""
        mine = {i: s for i, s in zip(self.ids, self.scores) if s is not None}
        theirs = {i: s for i, s in zip(other.ids, other.scores) if s is not None}
        shared = sorted(set(mine) & set(theirs))
        return [mine[i] for i in shared], [theirs[i] for i in shared]


def _paired(x, y, min_len: int) -> tuple[list[Number], list[Number]]:
    """Coerce two inputs (RatingVector or plain sequence) to aligned score lists."""
    if isinstance(x, RatingVector) and isinstance(y, RatingVector):
        if x.ids != y.ids:
            raise LengthMismatch("rating vectors carry different item id orders")
        xs, ys = list(x.scores), list(y.scores)
    else:
        xs, ys = list(x), list(y)
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} items")
    if len(xs) < min_len:
        raise TooFewItems(f"need at least {min_len} items, got {len(xs)}")
    if any(v is None for v in xs) or any(v is None for v in ys):
        raise MissingValue("paired metrics do not accept missing scores")
    return xs, ys


# -- rank correlation --

def _tie_pairs(values: Sequence[Number]) -> int:
    """Number of unordered index pairs sharing a value: sum of t*(t-1)/2 per group."""
    counts: dict[Number, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(t * (t - 1) // 2 for t in counts.values())


def kendall_tau_b(x, y) -> float | None:
    """Kendall rank correlation with the tie correction in both variables.

    tau_b = (C - D) / sqrt((n0 - n1) * (n0 - n2))

    where C and D count concordant and discordant index pairs, n0 = n(n-1)/2,
    and n1, n2 count pairs tied within x and within y.  Returns None when
    either vector is constant enough to zero a denominator factor.
    """
    xs, ys = _paired(x, y, min_len=2)
    n = len(xs)
    concordant = discordant = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 or dy == 0:
                continue
            if (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    denom_x = n0 - _tie_pairs(xs)
    denom_y = n0 - _tie_pairs(ys)
    if denom_x == 0 or denom_y == 0:
        return None
    return (concordant - discordant) / math.sqrt(denom_x * denom_y)


def average_ranks(values: Sequence[Number]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank positions."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(xs, ys))
    var_x = sum((a - mean_x) ** 2 for a in xs)
    var_y = sum((b - mean_y) ** 2 for b in ys)
    if var_x == 0.0 or var_y == 0.0:
        return None
    return cov / math.sqrt(var_x * var_y)


def spearman_rho(x, y) -> float | None:
    """Pearson correlation of average ranks; None for a constant input."""
    xs, ys = _paired(x, y, min_len=2)
    return _pearson(average_ranks(xs), average_ranks(ys))


def mse(x, y) -> float:
    """Mean of squared score differences."""
    xs, ys = _paired(x, y, min_len=1)
    return sum((a - b) ** 2 for a, b in zip(xs, ys)) / len(xs)


# -- Krippendorff's alpha --

ALPHA_LEVELS = ("nominal", "ordinal", "interval")


def _coincidence_matrix(
    units: Iterable[Sequence[Number]], values: Sequence[Number]
) -> dict[Number, dict[Number, float]]:
    """Pairwise-ratings count matrix.

    Each unit (item) rated by m >= 2 raters contributes every ordered rating
    pair with weight 1/(m-1), so a unit adds m ratings worth of mass in total.
    """
    o = {v: {w: 0.0 for w in values} for v in values}
    for unit in units:
        m = len(unit)
        if m < 2:
            continue
        weight = 1.0 / (m - 1)
        for i, a in enumerate(unit):
            for j, b in enumerate(unit):
                if i != j:
                    o[a][b] += weight
    return o


def _difference_fn(
    level: str, values: Sequence[Number], marginals: dict[Number, float]
) -> Callable[[Number, Number], float]:
    if level == "nominal":
        return lambda c, k: 0.0 if c == k else 1.0
    if level == "interval":
        return lambda c, k: float(c - k) ** 2

    if level == "ordinal":
        # delta(c,k) = (sum of marginal frequencies of every value between c
        # and k inclusive, minus half the endpoints') squared
        ordered = sorted(values)

        def ordinal(c: Number, k: Number) -> float:
            lo, hi = min(c, k), max(c, k)
            between = sum(marginals[g] for g in ordered if lo <= g <= hi)
            return (between - (marginals[lo] + marginals[hi]) / 2.0) ** 2

        return ordinal
    raise ValueError(f"level must be one of {ALPHA_LEVELS}, got {level!r}")


def krippendorff_alpha(
    ratings: Sequence[Sequence[Number | None]], level: str = "ordinal"
) -> float | None:
    """Chance-corrected multi-rater agreement, alpha = 1 - D_o / D_e.

    `ratings` is a raters x items matrix; None marks a missing rating.  Items
    with fewer than two ratings are excluded.  Observed and expected
    disagreement come from the coincidence matrix o and its marginals n_c:

        D_o = (1/n)       * sum_{c,k} o[c][k]   * delta(c, k)
        D_e = (1/(n(n-1))) * sum_{c,k} n_c * n_k * delta(c, k)

    Perfect agreement yields exactly 1.0.  A single distinct value everywhere
    makes D_e zero; that is undefined and returned as None.
    """
    if len(ratings) < 2:
        raise InsufficientOverlap("need at least 2 raters")
    n_items = {len(row) for row in ratings}
    if len(n_items) > 1:
        raise LengthMismatch("all raters must cover the same item axis")

    units = []
    for col in zip(*ratings):
        unit = [v for v in col if v is not None]
        if len(unit) >= 2:
            units.append(unit)
    if not units:
        raise InsufficientOverlap("no item carries two or more ratings")

    values = sorted({v for unit in units for v in unit})
    o = _coincidence_matrix(units, values)
    marginals = {v: sum(o[v].values()) for v in values}
    n = sum(marginals.values())
    delta = _difference_fn(level, values, marginals)

    d_observed = sum(o[c][k] * delta(c, k) for c in values for k in values) / n
    d_expected = sum(
        marginals[c] * marginals[k] * delta(c, k) for c in values for k in values
    ) / (n * (n - 1))
    if d_expected == 0.0:
        return None
    return 1.0 - d_observed / d_expected


# -- classification --

@dataclass(frozen=True)
class LabelStats:
    label: object
    precision: float
    recall: float
    f1: float
    support: int
    zero_division: bool = False


@dataclass
class ClassificationReport:
    label_order: tuple
    per_label: dict
    accuracy: float
    macro_f1: float
    confusion: dict  # confusion[gold][pred] -> count
    n_items: int

    def row_normalized(self) -> dict:
        out: dict = {}
        for gold in self.label_order:
            row = self.confusion[gold]
            total = sum(row.values())
            out[gold] = {
                pred: (row[pred] / total if total else 0.0) for pred in self.label_order
            }
        return out


def per_label_prf(gold: Sequence, pred: Sequence, label_set: Sequence) -> ClassificationReport:
    """Per-label precision/recall/F1 with support, accuracy, and confusion counts.

    Zero-denominator cases score 0.0 and are flagged via zero_division rather
    than erroring, matching the usual convention for absent labels.
    """
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    if len(gold) == 0:
        raise EmptyInput("no items to score")
    labels = tuple(label_set)
    known = set(labels)
    for value in gold:
        if value not in known:
            raise LabelError(f"gold label {value!r} outside label set")
    for value in pred:
        if value not in known:
            raise LabelError(f"predicted label {value!r} outside label set")

    confusion = {g: {p: 0 for p in labels} for g in labels}
    for g, p in zip(gold, pred):
        confusion[g][p] += 1

    per_label: dict = {}
    for label in labels:
        tp = confusion[label][label]
        fp = sum(confusion[g][label] for g in labels if g != label)
        fn = sum(confusion[label][p] for p in labels if p != label)
        # undefined denominators score 0.0 and set the flag; a genuine all-miss
        # label (tp=0 with fp and fn present) scores 0.0 unflagged
        zero = tp + fp == 0 or tp + fn == 0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall > 0.0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        per_label[label] = LabelStats(
            label=label, precision=precision, recall=recall, f1=f1,
            support=tp + fn, zero_division=zero,
        )

    n = len(gold)
    accuracy = sum(confusion[label][label] for label in labels) / n
    macro_f1 = sum(stats.f1 for stats in per_label.values()) / len(labels)
    return ClassificationReport(
        label_order=labels, per_label=per_label, accuracy=accuracy,
        macro_f1=macro_f1, confusion=confusion, n_items=n,
    )


# -- multi-rater aggregation --

@dataclass(frozen=True)
class PairResult:
    rater_a: str
    rater_b: str
    n_common: int
    value: float | None


@dataclass
class PairwiseResult:
    pairs: list[PairResult]
    mean: float | None
    n_skipped: int  # pairs whose metric was undefined


def pairwise_agreement(
    raters: Sequence[RatingVector],
    metric: Callable[[Sequence[Number], Sequence[Number]], float | None],
) -> PairwiseResult:
    """Mean of a paired metric over all unordered rater pairs on common items."""
    if len(raters) < 2:
        raise TooFewItems("need at least 2 raters")
    pairs: list[PairResult] = []
    for i in range(len(raters) - 1):
        for j in range(i + 1, len(raters)):
            a, b = raters[i], raters[j]
            xs, ys = a.common_items(b)
            if not xs:
                raise NoCommonItems(f"raters {a.rater_id!r} and {b.rater_id!r} share no items")
            pairs.append(
                PairResult(a.rater_id, b.rater_id, len(xs), metric(xs, ys))
            )
    defined = [p.value for p in pairs if p.value is not None]
    mean = sum(defined) / len(defined) if defined else None
    return PairwiseResult(pairs=pairs, mean=mean, n_skipped=len(pairs) - len(defined))


def cross_pairwise_agreement(
    group_a: Sequence[RatingVector],
    group_b: Sequence[RatingVector],
    metric: Callable[[Sequence[Number], Sequence[Number]], float | None],
) -> PairwiseResult:
    """Mean of a paired metric over every (a, b) pair across two rater groups."""
    if not group_a or not group_b:
        raise TooFewItems("both rater groups must be nonempty")
    pairs: list[PairResult] = []
    for a in group_a:
        for b in group_b:
            xs, ys = a.common_items(b)
            if not xs:
                raise NoCommonItems(f"raters {a.rater_id!r} and {b.rater_id!r} share no items")
            pairs.append(PairResult(a.rater_id, b.rater_id, len(xs), metric(xs, ys)))
    defined = [p.value for p in pairs if p.value is not None]
    mean = sum(defined) / len(defined) if defined else None
    return PairwiseResult(pairs=pairs, mean=mean, n_skipped=len(pairs) - len(defined))


@dataclass
class AgreementReport:
    """tau / rho / MSE are pairwise means; alpha is joint over all raters."""

    tau: float | None
    rho: float | None
    mse: float | None
    alpha: float | None
    n_items: int
    n_raters: int
    skipped_pairs: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "rho": self.rho,
            "mse": self.mse,
            "alpha": self.alpha,
            "n_items": self.n_items,
            "n_raters": self.n_raters,
            "skipped_pairs": dict(self.skipped_pairs),
        }


def rating_matrix(raters: Sequence[RatingVector]) -> list[list[Number | None]]:
    """Raters x items matrix over the union of item ids (sorted), None = unrated."""
    all_ids = sorted({i for r in raters for i in r.ids})
    matrix = []
    for r in raters:
        by_id = dict(zip(r.ids, r.scores))
        matrix.append([by_id.get(i) for i in all_ids])
    return matrix


def compute_agreement(raters: Sequence[RatingVector], level: str = "ordinal") -> AgreementReport:
    """Full agreement report for one score channel between two or more raters."""
    tau_result = pairwise_agreement(raters, kendall_tau_b)
    rho_result = pairwise_agreement(raters, spearman_rho)
    mse_result = pairwise_agreement(raters, mse)
    alpha = krippendorff_alpha(rating_matrix(raters), level=level)
    n_items = len({i for r in raters for i in r.ids})
    return AgreementReport(
        tau=tau_result.mean,
        rho=rho_result.mean,
        mse=mse_result.mean,
        alpha=alpha,
        n_items=n_items,
        n_raters=len(raters),
        skipped_pairs={
            "tau": tau_result.n_skipped,
            "rho": rho_result.n_skipped,
            "mse": mse_result.n_skipped,
        },
    )


@dataclass
class PairwiseClassification:
    per_pair: list[tuple[str, str, ClassificationReport]]
    mean_per_label_f1: dict
    mean_accuracy: float


def _summarize_pairs(
    per_pair: list[tuple[str, str, ClassificationReport]], labels: tuple
) -> PairwiseClassification:
    mean_f1 = {
        label: sum(rep.per_label[label].f1 for _, _, rep in per_pair) / len(per_pair)
        for label in labels
    }
    mean_acc = sum(rep.accuracy for _, _, rep in per_pair) / len(per_pair)
    return PairwiseClassification(
        per_pair=per_pair, mean_per_label_f1=mean_f1, mean_accuracy=mean_acc
    )


def pairwise_classification(
    raters: Sequence[RatingVector], label_set: Sequence
) -> PairwiseClassification:
    """Per-label F1 and accuracy averaged over all unordered rater pairs."""
    if len(raters) < 2:
        raise TooFewItems("need at least 2 raters")
    per_pair: list[tuple[str, str, ClassificationReport]] = []
    for i in range(len(raters) - 1):
        for j in range(i + 1, len(raters)):
            a, b = raters[i], raters[j]
            xs, ys = a.common_items(b)
            if not xs:
                raise NoCommonItems(f"raters {a.rater_id!r} and {b.rater_id!r} share no items")
            per_pair.append((a.rater_id, b.rater_id, per_label_prf(xs, ys, label_set)))
    return _summarize_pairs(per_pair, tuple(label_set))


def cross_pairwise_classification(
    group_a: Sequence[RatingVector], group_b: Sequence[RatingVector], label_set: Sequence
) -> PairwiseClassification:
    """Classification comparison over every (a, b) pair; group_a plays gold."""
    if not group_a or not group_b:
        raise TooFewItems("both rater groups must be nonempty")
    per_pair: list[tuple[str, str, ClassificationReport]] = []
    for a in group_a:
        for b in group_b:
            xs, ys = a.common_items(b)
            if not xs:
                raise NoCommonItems(f"raters {a.rater_id!r} and {b.rater_id!r} share no items")
            per_pair.append((a.rater_id, b.rater_id, per_label_prf(xs, ys, label_set)))
    return _summarize_pairs(per_pair, tuple(label_set))
