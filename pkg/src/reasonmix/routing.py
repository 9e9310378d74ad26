"""Trained intensity estimators and the prompt-rating baseline.

A small tanh MLP backs both heads: the router regresses the profiled target
coefficient from a query embedding (output squashed to [0, 1]), and the
reward model scores (embedding, coefficient) inputs, trained on preference
pairs with the pairwise logistic loss.  Query embeddings are the
mean-pooled final-block hidden states of the instruct model over the
prompt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RatingParseError, TrainingDivergedError, ValidationError
from .profiling import PreferencePair
from .tensors import NamedTensorArchive
from .toy import vocab
from .toy.model import GenerationParams, forward, generate
from .toy.tasks import QueryRecord

DEFAULT_HIDDEN_DIM = 32
DEFAULT_RATING_PROMPT: tuple[int, ...] = (vocab.RATE,)


def _init_mlp(feature_dim: int, hidden_dim: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(feature_dim)
    return {
        "w1": rng.normal(0.0, scale, size=(feature_dim, hidden_dim)),
        "b1": np.zeros(hidden_dim),
        "w2": rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=(hidden_dim, 1)),
        "b2": np.zeros(1),
    }


def _mlp_forward(weights: dict[str, np.ndarray], x: np.ndarray):
    z1 = x @ weights["w1"] + weights["b1"]
    a1 = np.tanh(z1)
    out = (a1 @ weights["w2"] + weights["b2"]).ravel()
    return out, (x, a1)


def _mlp_backward(
    weights: dict[str, np.ndarray], cache, dout: np.ndarray
) -> dict[str, np.ndarray]:
    x, a1 = cache
    dout_col = dout[:, None]
    grads = {
        "w2": a1.T @ dout_col,
        "b2": dout_col.sum(axis=0),
    }
    da1 = dout_col @ weights["w2"].T
    dz1 = da1 * (1.0 - a1 * a1)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return grads


def _weights_to_archive(weights: dict[str, np.ndarray]) -> NamedTensorArchive:
    return NamedTensorArchive(weights)


def _weights_from_archive(archive: NamedTensorArchive) -> dict[str, np.ndarray]:
    return {name: arr.astype(np.float64, copy=False) for name, arr in archive.items()}


@dataclass(frozen=True)
class RouterModel:
    feature_dim: int
    hidden_dim: int
    weights: NamedTensorArchive

    def predict(self, embedding: np.ndarray) -> float:
        """Estimated reasoning intensity in [0, 1] for one query embedding."""
        x = np.asarray(embedding, dtype=np.float64).reshape(1, -1)
        if x.shape[1] != self.feature_dim:
            raise ValidationError(
                f"embedding has {x.shape[1]} features, router expects {self.feature_dim}"
            )
        raw, _ = _mlp_forward(_weights_from_archive(self.weights), x)
        return float(1.0 / (1.0 + np.exp(-raw[0])))


@dataclass(frozen=True)
class RewardModel:
    feature_dim: int  # embedding dimension + 1 for the coefficient feature
    hidden_dim: int
    weights: NamedTensorArchive

    def score(self, embedding: np.ndarray, lam: float) -> float:
        emb = np.asarray(embedding, dtype=np.float64).ravel()
        x = np.concatenate([emb, [float(lam)]]).reshape(1, -1)
        if x.shape[1] != self.feature_dim:
            raise ValidationError(
                f"embedding+coefficient has {x.shape[1]} features, reward model "
                f"expects {self.feature_dim}"
            )
        raw, _ = _mlp_forward(_weights_from_archive(self.weights), x)
        return float(raw[0])


def router_loss_and_grads(
    weights: dict[str, np.ndarray], features: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE between the squashed router output and target coefficients."""
    raw, cache = _mlp_forward(weights, features)
    pred = 1.0 / (1.0 + np.exp(-raw))
    diff = pred - targets
    loss = float(np.mean(diff * diff))
    dout = 2.0 * diff * pred * (1.0 - pred) / len(targets)
    return loss, _mlp_backward(weights, cache, dout)


def train_router(
    dataset: list[tuple[np.ndarray, float]],
    epochs: int,
    lr: float,
    seed: int,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
) -> RouterModel:
    """Full-batch GD on the regression loss; deterministic for a fixed seed."""
    if not dataset:
        raise ValidationError("router training set is empty")
    features = np.asarray([np.asarray(e, dtype=np.float64).ravel() for e, _ in dataset])
    targets = np.asarray([float(t) for _, t in dataset])
    weights = _init_mlp(features.shape[1], hidden_dim, seed)
    for epoch in range(epochs):
        loss, grads = router_loss_and_grads(weights, features, targets)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        for name, g in grads.items():
            weights[name] -= lr * g
    return RouterModel(
        feature_dim=features.shape[1], hidden_dim=hidden_dim,
        weights=_weights_to_archive(weights),
    )


def reward_pair_loss(
    weights: dict[str, np.ndarray],
    chosen: np.ndarray,
    rejected: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean pairwise logistic loss -log sigmoid(R(chosen) - R(rejected))."""
    out_c, cache_c = _mlp_forward(weights, chosen)
    out_r, cache_r = _mlp_forward(weights, rejected)
    s = out_c - out_r
    # -log sigmoid(s) == softplus(-s), computed stably
    loss = float(np.mean(np.logaddexp(0.0, -s)))
    dloss_ds = (-1.0 / (1.0 + np.exp(s))) / len(s)
    grads_c = _mlp_backward(weights, cache_c, dloss_ds)
    grads_r = _mlp_backward(weights, cache_r, -dloss_ds)
    return loss, {name: grads_c[name] + grads_r[name] for name in grads_c}


def _pair_features(
    pairs: list[PreferencePair], embeddings: dict[str, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    chosen_rows, rejected_rows = [], []
    for p in pairs:
        if p.query_id not in embeddings:
            raise ValidationError(f"no embedding for query '{p.query_id}'")
        emb = np.asarray(embeddings[p.query_id], dtype=np.float64).ravel()
        chosen_rows.append(np.concatenate([emb, [p.lambda_chosen]]))
        rejected_rows.append(np.concatenate([emb, [p.lambda_rejected]]))
    return np.asarray(chosen_rows), np.asarray(rejected_rows)


def train_reward(
    pairs: list[PreferencePair],
    embeddings: dict[str, np.ndarray],
    epochs: int,
    lr: float,
    seed: int,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
) -> RewardModel:
    """Fit the preference reward model by full-batch GD on the pair loss."""
    if not pairs:
        raise ValidationError("preference training set is empty")
    chosen, rejected = _pair_features(pairs, embeddings)
    weights = _init_mlp(chosen.shape[1], hidden_dim, seed)
    for epoch in range(epochs):
        loss, grads = reward_pair_loss(weights, chosen, rejected)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        for name, g in grads.items():
            weights[name] -= lr * g
    return RewardModel(
        feature_dim=chosen.shape[1], hidden_dim=hidden_dim,
        weights=_weights_to_archive(weights),
    )


def estimate_lambda_pref(
    reward: RewardModel, query_embedding: np.ndarray, grid: list[float]
) -> float:
    """Grid coefficient with the highest reward score; ties go to the smallest."""
    if not grid:
        raise ValidationError("scoring grid must be nonempty")
    best_lam, best_score = None, -float("inf")
    for lam in sorted(float(g) for g in grid):
        score = reward.score(query_embedding, lam)
        if score > best_score:
            best_lam, best_score = lam, score
    return best_lam


def embed_query(instruct: NamedTensorArchive, query: QueryRecord) -> np.ndarray:
    """Mean-pooled final-block hidden state over the prompt tokens."""
    _, hiddens = forward(instruct, query.prompt_tokens)
    return hiddens[-1].mean(axis=0)


def parse_rating(completion: list[int], scale_max: int) -> int:
    """Leading digit run of a rating completion, validated against the scale."""
    digits: list[int] = []
    for token in completion:
        if 0 <= token <= 9:
            digits.append(token)
        else:
            break
    rating = vocab.decode_number(digits) if digits else None
    if rating is None or not 1 <= rating <= scale_max:
        raise RatingParseError(
            f"could not parse a rating in [1, {scale_max}] from {completion}"
        )
    return rating


def rating_to_lambda(rating: int, scale_max: int) -> float:
    """Linear map of a 1..scale_max rating onto [0, 1]."""
    if scale_max not in (9, 10):
        raise ValidationError(f"scale_max must be 9 or 10, got {scale_max}")
    if not 1 <= rating <= scale_max:
        raise ValidationError(f"rating {rating} outside [1, {scale_max}]")
    return (rating - 1) / (scale_max - 1)


def estimate_lambda_prompt(
    instruct: NamedTensorArchive,
    query: QueryRecord,
    rating_prompt: list[int] | tuple[int, ...] = DEFAULT_RATING_PROMPT,
    scale_max: int = 10,
) -> float:
    """Ask the instruct model to rate difficulty; scale the rating to [0, 1].

    The rating probe prepends the rating-mode marker to the query and decodes
    greedily; the leading digit run is the rating r, mapped to
    (r - 1) / (scale_max - 1).
    """
    if scale_max not in (9, 10):
        raise ValidationError(f"scale_max must be 9 or 10, got {scale_max}")
    if not rating_prompt:
        raise ValidationError("rating prompt must be nonempty")
    probe = list(rating_prompt) + list(query.prompt_tokens)
    completion, _ = generate(
        instruct, probe, GenerationParams(temperature=0.0, top_p=1.0, max_new_tokens=3, seed=0)
    )
    try:
        rating = parse_rating(completion, scale_max)
    except RatingParseError as exc:
        raise RatingParseError(f"query '{query.query_id}': {exc}") from exc
    return rating_to_lambda(rating, scale_max)
