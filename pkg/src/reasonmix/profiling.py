"""Grid profiling of queries and construction of preference data.

``profile_query`` measures accuracy and mean token cost of the merged model
at every grid coefficient by sampled generation.  ``target_lambda`` picks
the cheapest coefficient attaining peak accuracy (the regression target);
``build_preferences`` turns per-query tuples into chosen/rejected pairs via
the accuracy-first, cost-as-tiebreaker criterion.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ProfilingError, ValidationError
from .evaluation import answer_matches
from .interpolate import MergeCache, validate_lambda
from .seeding import derive_seed
from .tensors import NamedTensorArchive
from .toy.model import GenerationParams, generate
from .toy.tasks import QueryRecord


@dataclass(frozen=True)
class PolicyPerformanceTuple:
    lam: float
    acc: float
    cost: float

    def __post_init__(self):
        validate_lambda(self.lam)
        if not 0.0 <= self.acc <= 1.0:
            raise ValidationError(f"accuracy must lie in [0, 1], got {self.acc}")
        if self.cost < 0:
            raise ValidationError("cost must be >= 0")


@dataclass(frozen=True)
class PreferencePair:
    query_id: str
    lambda_chosen: float
    lambda_rejected: float

    def __post_init__(self):
        if self.lambda_chosen == self.lambda_rejected:
            raise ValidationError("chosen and rejected coefficients must differ")


def profile_query(
    query: QueryRecord,
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    grid: list[float],
    n_samples: int,
    gen_params: GenerationParams,
    cache: MergeCache | None = None,
) -> list[PolicyPerformanceTuple]:
    """Accuracy/cost tuple per grid coefficient, from sampled generations.

    Sampling seeds derive from the generation seed, the query id, the grid
    index and the sample index, so profiles are reproducible and independent
    of evaluation order.
    """
    if not grid:
        raise ValidationError("profiling grid must be nonempty")
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    cache = cache or MergeCache(instruct, thinking)
    tuples: list[PolicyPerformanceTuple] = []
    for j, lam in enumerate(grid):
        merged = cache.merge(lam)
        hits, total_tokens = 0, 0
        for s in range(n_samples):
            seed = derive_seed(gen_params.seed, "profile", query.query_id, j, s)
            try:
                completion, _ = generate(
                    merged, query.prompt_tokens,
                    GenerationParams(
                        temperature=gen_params.temperature,
                        top_p=gen_params.top_p,
                        max_new_tokens=gen_params.max_new_tokens,
                        seed=seed,
                    ),
                )
            except Exception as exc:
                raise ProfilingError(lam, str(exc)) from exc
            hits += answer_matches(completion, query.gold_answer)
            total_tokens += len(completion)
        tuples.append(
            PolicyPerformanceTuple(
                lam=validate_lambda(lam), acc=hits / n_samples, cost=total_tokens / n_samples
            )
        )
    return tuples


def target_lambda(tuples: list[PolicyPerformanceTuple]) -> float:
    """Smallest coefficient achieving the highest accuracy."""
    if not tuples:
        raise ValidationError("target_lambda needs at least one tuple")
    best_acc = max(t.acc for t in tuples)
    return min(t.lam for t in tuples if t.acc == best_acc)


def build_preferences(
    tuples_by_query: dict[str, list[PolicyPerformanceTuple]],
    delta_acc: float,
) -> list[PreferencePair]:
    """Chosen/rejected pairs under the hierarchical criterion.

    Within each query, for every unordered tuple pair: prefer the clearly
    more accurate side (margin > delta_acc); when accuracies are within the
    margin, prefer the cheaper side; equal-cost ties are discarded.  The
    output never contains both orientations of a pair.
    """
    if delta_acc < 0:
        raise ValidationError("delta_acc must be >= 0")
    pairs: list[PreferencePair] = []
    for query_id in sorted(tuples_by_query):
        tuples = tuples_by_query[query_id]
        for i in range(len(tuples)):
            for j in range(i + 1, len(tuples)):
                a, b = tuples[i], tuples[j]
                if a.acc > b.acc + delta_acc:
                    chosen, rejected = a, b
                elif b.acc > a.acc + delta_acc:
                    chosen, rejected = b, a
                elif a.cost < b.cost:
                    chosen, rejected = a, b
                elif b.cost < a.cost:
                    chosen, rejected = b, a
                else:
                    continue  # no clear preference
                if chosen.lam == rejected.lam:
                    continue
                pairs.append(
                    PreferencePair(
                        query_id=query_id,
                        lambda_chosen=chosen.lam,
                        lambda_rejected=rejected.lam,
                    )
                )
    return pairs


def profiles_to_csv(
    tuples_by_query: dict[str, list[PolicyPerformanceTuple]], path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "lambda", "acc", "cost"])
        for query_id in sorted(tuples_by_query):
            for t in tuples_by_query[query_id]:
                writer.writerow([query_id, repr(t.lam), repr(t.acc), repr(t.cost)])


def profiles_from_csv(path: str | Path) -> dict[str, list[PolicyPerformanceTuple]]:
    out: dict[str, list[PolicyPerformanceTuple]] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["query_id"], []).append(
                PolicyPerformanceTuple(
                    lam=float(row["lambda"]), acc=float(row["acc"]), cost=float(row["cost"])
                )
            )
    return out


def preferences_to_jsonl(pairs: list[PreferencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "query_id": p.query_id,
                        "lambda_chosen": p.lambda_chosen,
                        "lambda_rejected": p.lambda_rejected,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def preferences_from_jsonl(path: str | Path) -> list[PreferencePair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pairs.append(
                    PreferencePair(
                        query_id=obj["query_id"],
                        lambda_chosen=float(obj["lambda_chosen"]),
                        lambda_rejected=float(obj["lambda_rejected"]),
                    )
                )
    return pairs
