"""Self-contained toy decoder-only transformer stack: vocabulary, synthetic
arithmetic tasks, model init/forward/sampling and a gradient-descent trainer."""

from . import vocab
from .model import (
    GenerationParams,
    ModelConfig,
    config_from_archive,
    forward,
    generate,
    init_model,
)
from .tasks import (
    QueryRecord,
    make_synthetic_tasks,
    records_from_jsonl,
    records_to_jsonl,
    thinking_trace,
)
from .train import corpus_loss, make_loss_eval, train

__all__ = [
    "GenerationParams",
    "ModelConfig",
    "QueryRecord",
    "config_from_archive",
    "corpus_loss",
    "forward",
    "generate",
    "init_model",
    "make_loss_eval",
    "make_synthetic_tasks",
    "records_from_jsonl",
    "records_to_jsonl",
    "thinking_trace",
    "train",
    "vocab",
]
