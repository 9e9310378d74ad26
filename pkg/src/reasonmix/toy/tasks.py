"""Synthetic arithmetic tasks with graded difficulty and exact gold answers.

Two families:

* ``multi-digit-add``: a + b where both operands have exactly ``level``
  digits.  Harder levels mean longer carry chains.
* ``modular-add``: (a + b) mod m for a small modulus spelled in the prompt.

The deliberate-reasoning trace for a record is the full sum written least
significant digit first: carries then propagate in generation order, which
is the step-by-step decomposition a small model can actually learn, while
the direct answer (most significant digit first) requires resolving every
carry internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from . import vocab

FAMILIES = ("multi-digit-add", "modular-add")

_MODULI = (7, 11, 13)


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    prompt_tokens: list[int]
    gold_answer: list[int]
    difficulty_level: int

    def __post_init__(self):
        if not self.prompt_tokens:
            raise ValidationError(f"query '{self.query_id}' has an empty prompt")
        if self.difficulty_level < 1:
            raise ValidationError(f"query '{self.query_id}' has difficulty < 1")


def _operand_range(level: int) -> tuple[int, int]:
    # level-1 operands are single digits including 0; magnitude grows per level
    if level == 1:
        return 0, 10
    return 10 ** (level - 1), 10**level


def make_synthetic_tasks(
    family: str,
    difficulty_levels: int,
    per_level: int,
    seed: int,
) -> list[QueryRecord]:
    """Generate ``per_level`` records for each difficulty level, deterministically."""
    if family not in FAMILIES:
        raise ValidationError(f"unknown task family {family!r}; expected one of {FAMILIES}")
    if difficulty_levels < 1 or per_level < 1:
        raise ValidationError("difficulty_levels and per_level must be >= 1")
    records: list[QueryRecord] = []
    for level in range(1, difficulty_levels + 1):
        rng = np.random.default_rng([seed, level])
        low, high = _operand_range(level)
        for i in range(per_level):
            a = int(rng.integers(low, high))
            b = int(rng.integers(low, high))
            prompt = vocab.encode_number(a) + [vocab.PLUS] + vocab.encode_number(b)
            if family == "modular-add":
                m = int(_MODULI[rng.integers(0, len(_MODULI))])
                prompt += [vocab.MOD] + vocab.encode_number(m)
                answer = (a + b) % m
            else:
                answer = a + b
            prompt.append(vocab.EQUALS)
            records.append(
                QueryRecord(
                    query_id=f"{family}-L{level}-{i:04d}",
                    prompt_tokens=prompt,
                    gold_answer=vocab.encode_number(answer),
                    difficulty_level=level,
                )
            )
    return records


def parse_prompt(prompt_tokens: list[int]) -> tuple[int, int, int | None]:
    """Recover (a, b, modulus-or-None) from an encoded prompt."""
    toks = list(prompt_tokens)
    if not toks or toks[-1] != vocab.EQUALS:
        raise ValidationError("prompt does not end with '='")
    toks = toks[:-1]
    try:
        plus_at = toks.index(vocab.PLUS)
    except ValueError as exc:
        raise ValidationError("prompt has no '+' operator") from exc
    a = vocab.decode_number(toks[:plus_at])
    rest = toks[plus_at + 1 :]
    modulus: int | None = None
    if vocab.MOD in rest:
        mod_at = rest.index(vocab.MOD)
        b = vocab.decode_number(rest[:mod_at])
        modulus = vocab.decode_number(rest[mod_at + 1 :])
        if modulus is None or modulus <= 0:
            raise ValidationError("prompt has an invalid modulus")
    else:
        b = vocab.decode_number(rest)
    if a is None or b is None:
        raise ValidationError("prompt operands are not digit runs")
    return a, b, modulus


def thinking_trace(record: QueryRecord) -> list[int]:
    """Intermediate-step tokens: the full sum, least significant digit first."""
    a, b, _ = parse_prompt(record.prompt_tokens)
    return list(reversed(vocab.encode_number(a + b)))


def records_to_jsonl(records: list[QueryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def records_from_jsonl(path: str | Path) -> list[QueryRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                QueryRecord(
                    query_id=obj["query_id"],
                    prompt_tokens=[int(t) for t in obj["prompt_tokens"]],
                    gold_answer=[int(t) for t in obj["gold_answer"]],
                    difficulty_level=int(obj["difficulty_level"]),
                )
            )
    return records
