"""Executable checks of the structural claims on toy model pairs.

Three checks: the loss barrier along the interpolation path stays within
tolerance of the worse endpoint (given shared lineage); accuracy is
monotone in the blending coefficient once the deliberate endpoint is at
least as capable per difficulty level; and probe hidden states move
continuously with the coefficient, with the first principal component
tracking it almost linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import ValidationError
from .evaluation import answer_matches
from .interpolate import BarrierScan, MergeCache, _check_grid, scan_barrier
from .seeding import derive_seed
from .tensors import NamedTensorArchive
from .toy import vocab
from .toy.model import GenerationParams, config_from_archive, forward, generate
from .toy.model import ROOT_DIGEST_KEY
from .toy.tasks import QueryRecord

LMC_EPSILON_FRACTION = 0.1  # barrier tolerance as a fraction of the worse endpoint loss
POWER_ITERATION_TOL = 1e-8
POWER_ITERATION_MAX_STEPS = 10_000


@dataclass(frozen=True)
class MonotonicityReport:
    grid: tuple[float, ...]
    accuracies: tuple[float, ...]
    spearman: float
    flat: bool
    premise_ok: bool
    premise_by_level: dict[int, tuple[float, float]]  # level -> (instruct acc, thinking acc)

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "accuracies": list(self.accuracies),
            "spearman": self.spearman,
            "flat": self.flat,
            "premise_ok": self.premise_ok,
            "premise_by_level": {
                str(k): list(v) for k, v in sorted(self.premise_by_level.items())
            },
        }


@dataclass(frozen=True)
class ContinuityReport:
    grid: tuple[float, ...]
    pc1_scores: tuple[float, ...]
    correlation_r: float
    lipschitz_ratios: tuple[float, ...]
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "pc1_scores": list(self.pc1_scores),
            "correlation_r": self.correlation_r,
            "lipschitz_ratios": list(self.lipschitz_ratios),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class LmcReport:
    scan: BarrierScan
    epsilon: float
    verdict: bool
    lineage_shared: bool | None  # None when lineage metadata is missing

    def to_dict(self) -> dict:
        return {
            "scan": self.scan.to_dict(),
            "epsilon": self.epsilon,
            "verdict": self.verdict,
            "lineage_shared": self.lineage_shared,
        }


def rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, bool]:
    """Spearman rho of (xs, ys); a flat ys profile reports (0.0, True)."""
    if len(set(ys)) == 1:
        return 0.0, True
    rho = float(stats.spearmanr(xs, ys).statistic)
    if math.isnan(rho):
        return 0.0, True
    return rho, False


def exact_linear_accuracy(
    grid: Sequence[float],
    p_instruct: Sequence[float],
    p_thinking: Sequence[float],
) -> list[float]:
    """Expected accuracy per coefficient when per-query success probability
    blends exactly linearly between the endpoints."""
    pi = np.asarray(p_instruct, dtype=np.float64)
    pt = np.asarray(p_thinking, dtype=np.float64)
    if pi.shape != pt.shape:
        raise ValidationError("probability vectors must have matching length")
    return [float(np.mean(lam * pt + (1.0 - lam) * pi)) for lam in grid]


def _grid_accuracy(
    merged: NamedTensorArchive,
    queries: Sequence[QueryRecord],
    n_samples: int,
    gen_params: GenerationParams,
    tag: object,
) -> float:
    hits = 0
    for query in queries:
        for s in range(n_samples):
            seed = derive_seed(gen_params.seed, "monotonic", tag, query.query_id, s)
            completion, _ = generate(
                merged, query.prompt_tokens,
                GenerationParams(gen_params.temperature, gen_params.top_p,
                                 gen_params.max_new_tokens, seed),
            )
            hits += answer_matches(completion, query.gold_answer)
    return hits / (len(queries) * n_samples)


def check_monotonicity(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    grid: Sequence[float],
    task_set: Sequence[QueryRecord],
    n_samples: int,
    gen_params: GenerationParams,
) -> MonotonicityReport:
    """Accuracy per grid coefficient plus the Spearman rank correlation.

    The capability-ordering premise (deliberate endpoint at least as accurate
    per difficulty level) is verified first from the endpoint runs; a
    violation is reported, not raised.  A flat accuracy profile reports
    Spearman 0 with the flat flag set.
    """
    vals = _check_grid(grid, require_endpoints=True)
    if not task_set:
        raise ValidationError("monotonicity check needs a nonempty task set")
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    cache = MergeCache(instruct, thinking)
    accuracies = [
        _grid_accuracy(cache.merge(lam), task_set, n_samples, gen_params, j)
        for j, lam in enumerate(vals)
    ]

    levels = sorted({q.difficulty_level for q in task_set})
    premise: dict[int, tuple[float, float]] = {}
    premise_ok = True
    for level in levels:
        subset = [q for q in task_set if q.difficulty_level == level]
        acc_i = _grid_accuracy(instruct, subset, n_samples, gen_params, "premise-i")
        acc_t = _grid_accuracy(thinking, subset, n_samples, gen_params, "premise-t")
        premise[level] = (acc_i, acc_t)
        if acc_t < acc_i:
            premise_ok = False

    rho, flat = rank_correlation(vals, accuracies)
    return MonotonicityReport(
        grid=tuple(vals),
        accuracies=tuple(accuracies),
        spearman=rho,
        flat=flat,
        premise_ok=premise_ok,
        premise_by_level=premise,
    )


def power_iteration_pc1(cov: np.ndarray, tol: float = POWER_ITERATION_TOL) -> np.ndarray:
    """Dominant eigenvector of a symmetric PSD matrix by power iteration."""
    d = cov.shape[0]
    v = np.ones(d) / math.sqrt(d)
    for _ in range(POWER_ITERATION_MAX_STEPS):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v  # zero matrix: any unit vector is as good as another
        w /= norm
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            return w
        v = w
    return v


def probe_position(tokens: Sequence[int]) -> int:
    """Index probed for hidden states: the deliberation-open token when
    present, else the last token."""
    toks = list(tokens)
    if vocab.THINK_OPEN in toks:
        return toks.index(vocab.THINK_OPEN)
    return len(toks) - 1


def check_continuity(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    grid: Sequence[float],
    probe_inputs: Sequence[Sequence[int]],
) -> ContinuityReport:
    """Trace probe hidden states along the grid and summarize their geometry.

    For each coefficient the final-block hidden state at the probe position
    is averaged over the probe inputs; the first principal component of
    those mean states (power iteration on the centered covariance) is
    correlated with the coefficient, and finite-difference Lipschitz ratios
    are reported per adjacent grid pair.
    """
    vals = [float(g) for g in _check_grid(grid, require_endpoints=False)]
    if len(vals) < 3:
        raise ValidationError("continuity check needs at least 3 grid points")
    if len(probe_inputs) < 2:
        raise ValidationError("continuity check needs at least 2 probe inputs")
    config = config_from_archive(instruct)
    cache = MergeCache(instruct, thinking)
    states = []
    for lam in vals:
        merged = cache.merge(lam)
        collected = []
        for tokens in probe_inputs:
            toks = list(tokens)
            if len(toks) > config.max_seq_len:
                raise ValidationError("probe input exceeds max_seq_len")
            _, hiddens = forward(merged, toks)
            collected.append(hiddens[-1][probe_position(toks)])
        states.append(np.mean(collected, axis=0))
    matrix = np.asarray(states)

    ratios = []
    for i in range(len(vals) - 1):
        dist = float(np.linalg.norm(matrix[i + 1] - matrix[i]))
        ratios.append(dist / (vals[i + 1] - vals[i]))

    centered = matrix - matrix.mean(axis=0)
    degenerate = bool(np.allclose(centered, 0.0, atol=1e-12))
    if degenerate:
        scores = np.zeros(len(vals))
        r = 0.0
    else:
        cov = centered.T @ centered / (len(vals) - 1)
        pc1 = power_iteration_pc1(cov)
        scores = centered @ pc1
        if np.allclose(scores, scores[0]):
            r, degenerate = 0.0, True
        else:
            r = float(np.corrcoef(vals, scores)[0, 1])
    return ContinuityReport(
        grid=tuple(vals),
        pc1_scores=tuple(float(s) for s in scores),
        correlation_r=r,
        lipschitz_ratios=tuple(ratios),
        degenerate=degenerate,
    )


def check_lmc(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    grid: Sequence[float],
    loss_eval: Callable[[NamedTensorArchive], float],
    epsilon_fraction: float = LMC_EPSILON_FRACTION,
) -> LmcReport:
    """Barrier scan plus the shared-basin verdict.

    The verdict holds when the barrier height stays within
    epsilon_fraction of the worse endpoint loss.  Lineage metadata is
    compared when both archives carry it; a missing stamp downgrades the
    lineage field to None (the scan still runs).
    """
    root_i = instruct.metadata.get(ROOT_DIGEST_KEY)
    root_t = thinking.metadata.get(ROOT_DIGEST_KEY)
    lineage: bool | None
    if root_i is None or root_t is None:
        lineage = None
    else:
        lineage = root_i == root_t
    scan = scan_barrier(instruct, thinking, grid, loss_eval)
    epsilon = epsilon_fraction * max(scan.losses[0], scan.losses[-1])
    return LmcReport(
        scan=scan,
        epsilon=epsilon,
        verdict=scan.barrier_height <= epsilon,
        lineage_shared=lineage,
    )
