"""Run-level metrics, Pareto analysis and answer matching.

Accuracy, mean token cost, compression relative to the deliberate-model
baseline, and the share of responses containing an explicit deliberation
block.  Compression is reported against the mean token count of the fully
deliberate endpoint on the same query set.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .toy import vocab


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    method: str
    lambda_used: float
    correct: bool
    tokens: int
    contains_think_close: bool

    def __post_init__(self):
        if self.tokens < 0:
            raise ValidationError("token count must be >= 0")


@dataclass(frozen=True)
class EvaluationReport:
    acc: float
    tok_mean: float
    cr_percent: float
    think_ratio_percent: float
    pareto_points: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "tok_mean": self.tok_mean,
            "cr_percent": self.cr_percent,
            "think_ratio_percent": self.think_ratio_percent,
            "pareto_points": [list(p) for p in self.pareto_points],
        }


def answer_matches(completion: list[int], gold: list[int]) -> bool:
    """Exact match of the answer span against the gold tokens.

    The span is everything after the first answer marker; a completion with
    no marker is compared whole.
    """
    if not gold:
        raise ValidationError("gold answer must be nonempty")
    completion = list(completion)
    if vocab.ANS in completion:
        span = completion[completion.index(vocab.ANS) + 1 :]
    else:
        span = completion
    return span == list(gold)


def score_run(records: list[RunRecord], thinking_baseline_tok: float) -> EvaluationReport:
    """Aggregate run records into the four headline metrics."""
    if not records:
        raise ValidationError("cannot score an empty record set")
    if not thinking_baseline_tok > 0:
        raise ValidationError("thinking baseline token count must be positive")
    n = len(records)
    acc = sum(r.correct for r in records) / n
    tok_mean = sum(r.tokens for r in records) / n
    think = 100.0 * sum(r.contains_think_close for r in records) / n
    return EvaluationReport(
        acc=acc,
        tok_mean=tok_mean,
        cr_percent=100.0 * tok_mean / thinking_baseline_tok,
        think_ratio_percent=think,
        pareto_points=((tok_mean, acc),),
    )


def pareto_frontier(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated subset of (cost, accuracy) points, sorted by cost.

    A point dominates another when its cost is <= and accuracy >= with at
    least one strict; duplicates collapse to a single entry.
    """
    if not points:
        raise ValidationError("cannot compute a frontier of zero points")
    unique = sorted(set((float(c), float(a)) for c, a in points), key=lambda p: (p[0], -p[1]))
    frontier: list[tuple[float, float]] = []
    best_acc = -float("inf")
    for cost, acc in unique:
        if acc > best_acc:
            frontier.append((cost, acc))
            best_acc = acc
    return frontier


def weakly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """(cost, acc) point a is at least as cheap and at least as accurate as b."""
    return a[0] <= b[0] and a[1] >= b[1]
