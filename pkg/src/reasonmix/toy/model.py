"""Toy decoder-only transformer: configuration, init, forward and sampling.

Checkpoints are plain tensor archives; the model configuration travels in
archive metadata so any merged or fine-tuned descendant stays loadable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError, InputError, ValidationError
from ..tensors import NamedTensorArchive, archive_digest
from . import net, vocab

CONFIG_METADATA_KEY = "model_config"
ROOT_DIGEST_KEY = "root_digest"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = vocab.VOCAB_SIZE
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_seq_len: int = 64
    activation: str = "gelu"

    def __post_init__(self):
        counts = (self.vocab_size, self.d_model, self.n_heads, self.n_layers, self.max_seq_len)
        if any(c < 1 for c in counts):
            raise ConfigError(f"all model dimensions must be >= 1, got {self}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )
        if self.activation != "gelu":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class GenerationParams:
    """Sampling controls.  temperature=0 selects deterministic argmax decoding;
    any positive value scales logits before nucleus sampling."""

    temperature: float = 0.6
    top_p: float = 0.95
    max_new_tokens: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValidationError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_new_tokens < 0:
            raise ValidationError("max_new_tokens must be >= 0")


def init_model(config: ModelConfig, seed: int) -> NamedTensorArchive:
    """Deterministic random initialization; metadata embeds the config."""
    rng = np.random.default_rng(seed)
    entries: dict[str, np.ndarray] = {}
    shapes = net.parameter_shapes(
        config.vocab_size, config.d_model, config.n_layers, config.max_seq_len
    )
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(".gain"):
            entries[name] = np.ones(shape)
        elif name.endswith((".bias", ".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2", "head.b")):
            entries[name] = np.zeros(shape)
        else:
            entries[name] = rng.normal(0.0, 0.02, size=shape)
    archive = NamedTensorArchive(
        entries,
        {CONFIG_METADATA_KEY: config.to_json(), "init_seed": str(seed)},
    )
    return archive.with_metadata({ROOT_DIGEST_KEY: archive_digest(archive)})


def config_from_archive(archive: NamedTensorArchive) -> ModelConfig:
    meta = archive.metadata
    if CONFIG_METADATA_KEY not in meta:
        raise ConfigError("archive metadata does not embed a model config")
    return ModelConfig.from_json(meta[CONFIG_METADATA_KEY])


def params_from_archive(archive: NamedTensorArchive) -> dict[str, np.ndarray]:
    return {name: arr.astype(np.float64, copy=False) for name, arr in archive.items()}


def _check_tokens(tokens: list[int], config: ModelConfig, what: str = "tokens") -> None:
    if not tokens:
        raise InputError(f"{what} must be nonempty")
    if len(tokens) > config.max_seq_len:
        raise InputError(f"{what} length {len(tokens)} exceeds max_seq_len {config.max_seq_len}")
    for t in tokens:
        if not 0 <= int(t) < config.vocab_size:
            raise InputError(f"token {t} outside vocabulary of size {config.vocab_size}")


def forward(
    model: NamedTensorArchive, tokens: list[int]
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits [len, vocab] plus the residual stream after every block."""
    config = config_from_archive(model)
    _check_tokens(tokens, config)
    params = params_from_archive(model)
    batch = np.asarray([tokens], dtype=np.int64)
    logits, hiddens, _ = net.forward_core(params, config.n_layers, config.n_heads, batch)
    return logits[0], [h[0] for h in hiddens]


def _sample_token(logits: np.ndarray, params: GenerationParams, rng: np.random.Generator) -> int:
    if params.temperature == 0.0:
        return int(np.argmax(logits))
    probs = net.softmax(logits / params.temperature)
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cutoff = int(np.searchsorted(cumulative, params.top_p, side="left"))
    keep = order[: min(cutoff + 1, len(order))]
    kept = probs[keep]
    return int(rng.choice(keep, p=kept / kept.sum()))


def generate(
    model: NamedTensorArchive,
    prompt: list[int],
    params: GenerationParams,
    stop_token: int = vocab.EOS,
) -> tuple[list[int], list[float]]:
    """Sample a completion; stops at the end token or max_new_tokens.

    Also returns, per emitted token, the maximum probability of the raw
    (untempered) next-token distribution at that step.  The terminating end
    token is not part of the completion or the trace.  Fixed seed implies a
    fixed output.
    """
    config = config_from_archive(model)
    _check_tokens(prompt, config, what="prompt")
    model_params = params_from_archive(model)
    rng = np.random.default_rng(params.seed)
    budget = min(params.max_new_tokens, config.max_seq_len - len(prompt))

    sequence = list(prompt)
    completion: list[int] = []
    max_probs: list[float] = []
    for _ in range(budget):
        batch = np.asarray([sequence], dtype=np.int64)
        logits, _, _ = net.forward_core(model_params, config.n_layers, config.n_heads, batch)
        step_logits = logits[0, -1]
        raw_max = float(np.max(net.softmax(step_logits)))
        token = _sample_token(step_logits, params, rng)
        if token == stop_token:
            break
        completion.append(token)
        max_probs.append(raw_max)
        sequence.append(token)
    return completion, max_probs
