"""Mini-batch gradient-descent trainer for the toy models.

Two response styles share one corpus: ``instruct`` learns prompt -> answer
directly (plus a difficulty self-rating skill used by the prompt-based
intensity estimator), ``thinking`` learns prompt -> deliberation block ->
answer.  Plain GD with a fixed learning rate keeps the optimizer stateless,
which the structural checks downstream rely on.
"""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergedError, ValidationError
from ..tensors import NamedTensorArchive, archive_digest
from . import net, tasks, vocab
from .model import (
    CONFIG_METADATA_KEY,
    ROOT_DIGEST_KEY,
    config_from_archive,
    params_from_archive,
)

STYLES = ("instruct", "thinking")
LOSS_STYLES = STYLES + ("mixed",)

RATING_SCALE_MAX = 10
#: every n-th corpus record also yields a difficulty-rating sequence when
#: training the instruct style
RATING_EVERY = 2


def rating_for_level(level: int, max_level: int, scale_max: int = RATING_SCALE_MAX) -> int:
    """Map a difficulty level onto the 1..scale_max rating scale, linearly."""
    if max_level <= 1:
        return (scale_max + 1) // 2
    r = 1 + round((level - 1) * (scale_max - 1) / (max_level - 1))
    return int(min(max(r, 1), scale_max))


def answer_sequence(record: tasks.QueryRecord, style: str) -> tuple[list[int], int]:
    """Full training sequence and its prompt length for one record."""
    if style == "instruct":
        completion = [vocab.ANS] + record.gold_answer + [vocab.EOS]
    elif style == "thinking":
        completion = (
            [vocab.THINK_OPEN]
            + tasks.thinking_trace(record)
            + [vocab.THINK_CLOSE, vocab.ANS]
            + record.gold_answer
            + [vocab.EOS]
        )
    else:
        raise ValidationError(f"unknown style {style!r}; expected one of {STYLES}")
    return record.prompt_tokens + completion, len(record.prompt_tokens)


def rating_sequence(record: tasks.QueryRecord, max_level: int) -> tuple[list[int], int]:
    rating = rating_for_level(record.difficulty_level, max_level)
    prompt = [vocab.RATE] + record.prompt_tokens
    return prompt + vocab.encode_number(rating) + [vocab.EOS], len(prompt)


def build_sequences(
    corpus: list[tasks.QueryRecord], style: str
) -> list[tuple[list[int], int]]:
    if style == "mixed":
        half = build_sequences(corpus, "instruct") + build_sequences(corpus, "thinking")
        return half
    sequences = [answer_sequence(rec, style) for rec in corpus]
    if style == "instruct":
        max_level = max(rec.difficulty_level for rec in corpus)
        for idx, rec in enumerate(corpus):
            if idx % RATING_EVERY == 0:
                sequences.append(rating_sequence(rec, max_level))
    return sequences


def _pack_batch(
    sequences: list[tuple[list[int], int]], indices: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad a batch to a common length; loss covers completion tokens only."""
    chosen = [sequences[i] for i in indices]
    width = max(len(seq) for seq, _ in chosen)
    tokens = np.full((len(chosen), width - 1), vocab.PAD, dtype=np.int64)
    targets = np.full((len(chosen), width - 1), vocab.PAD, dtype=np.int64)
    mask = np.zeros((len(chosen), width - 1), dtype=bool)
    for row, (seq, prompt_len) in enumerate(chosen):
        arr = np.asarray(seq, dtype=np.int64)
        tokens[row, : len(seq) - 1] = arr[:-1]
        targets[row, : len(seq) - 1] = arr[1:]
        mask[row, prompt_len - 1 : len(seq) - 1] = True
    return tokens, targets, mask


def train(
    base: NamedTensorArchive,
    corpus: list[tasks.QueryRecord],
    style: str,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
    clip_norm: float = 1.0,
    max_steps: int | None = None,
) -> NamedTensorArchive:
    """Cross-entropy fine-tune of ``base`` on the corpus, in the given style.

    Plain GD steps; the only stability guard is a global gradient-norm clip
    (clip_norm <= 0 disables it).  Deterministic for a fixed seed.  epochs=0
    returns the base weights untouched (metadata still records the lineage
    stamp).  Besides the two response styles, ``mixed`` trains on both
    formats at once, which is how a shared pre-trained base is produced.
    ``max_steps`` caps the total number of update steps across epochs.
    """
    if not corpus:
        raise ValidationError("training corpus is empty")
    if style not in LOSS_STYLES:
        raise ValidationError(f"unknown style {style!r}; expected one of {LOSS_STYLES}")
    config = config_from_archive(base)
    params = {name: arr.astype(np.float64).copy() for name, arr in base.items()}
    sequences = build_sequences(corpus, style)
    for seq, _ in sequences:
        if len(seq) > config.max_seq_len:
            raise ValidationError(
                f"training sequence of length {len(seq)} exceeds max_seq_len "
                f"{config.max_seq_len}"
            )

    rng = np.random.default_rng([seed, len(sequences)])
    steps_taken = 0
    for epoch in range(epochs):
        if max_steps is not None and steps_taken >= max_steps:
            break
        order = rng.permutation(len(sequences))
        for start in range(0, len(order), batch_size):
            if max_steps is not None and steps_taken >= max_steps:
                break
            batch_idx = order[start : start + batch_size]
            tokens, targets, mask = _pack_batch(sequences, batch_idx)
            loss, grads = net.loss_and_grads(
                params, config.n_layers, config.n_heads, tokens, targets, mask
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            if clip_norm > 0:
                net.clip_gradients(grads, clip_norm)
            for name, grad in grads.items():
                params[name] -= lr * grad
            steps_taken += 1

    base_meta = base.metadata
    metadata = {
        CONFIG_METADATA_KEY: base_meta[CONFIG_METADATA_KEY],
        ROOT_DIGEST_KEY: base_meta.get(ROOT_DIGEST_KEY, archive_digest(base)),
        "base_digest": archive_digest(base),
        "trained_style": style,
        "trained_epochs": str(epochs),
        "trained_lr": repr(float(lr)),
        "trained_seed": str(seed),
    }
    return NamedTensorArchive(params, metadata)


def corpus_loss(
    model: NamedTensorArchive,
    corpus: list[tasks.QueryRecord],
    style: str = "mixed",
    batch_size: int = 64,
) -> float:
    """Mean completion cross-entropy of a model over a corpus (no updates)."""
    if style not in LOSS_STYLES:
        raise ValidationError(f"unknown style {style!r}; expected one of {LOSS_STYLES}")
    config = config_from_archive(model)
    params = params_from_archive(model)
    sequences = build_sequences(corpus, style)
    total, count = 0.0, 0
    for start in range(0, len(sequences), batch_size):
        indices = np.arange(start, min(start + batch_size, len(sequences)))
        tokens, targets, mask = _pack_batch(sequences, indices)
        logits, _, _ = net.forward_core(params, config.n_layers, config.n_heads, tokens)
        loss, _ = net.masked_cross_entropy(logits, targets, mask)
        n = int(mask.sum())
        total += loss * n
        count += n
    return total / max(count, 1)


def make_loss_eval(corpus: list[tasks.QueryRecord], style: str = "mixed"):
    """Loss evaluator closure for barrier scans; deterministic per archive."""

    def loss_eval(model: NamedTensorArchive) -> float:
        return corpus_loss(model, corpus, style=style)

    return loss_eval
