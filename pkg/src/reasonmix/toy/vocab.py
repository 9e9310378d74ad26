"""Token vocabulary shared by the toy models and the synthetic task families.

Token ids are the interface; there is no text tokenizer.  Digits occupy ids
0-9 so numeric literals encode directly.
"""

from __future__ import annotations

DIGIT_BASE = 0  # ids 0..9 are the decimal digits
PLUS = 10
MOD = 11
EQUALS = 12
ANS = 13  # answer-inducing marker: everything after it is the final answer
THINK_OPEN = 14
THINK_CLOSE = 15
EOS = 16
PAD = 17  # batch padding only; never a training target
RATE = 18  # difficulty self-rating mode marker

VOCAB_SIZE = 19

_NAMES = {
    PLUS: "+",
    MOD: "%",
    EQUALS: "=",
    ANS: "<ans>",
    THINK_OPEN: "<think>",
    THINK_CLOSE: "</think>",
    EOS: "<eos>",
    PAD: "<pad>",
    RATE: "<rate>",
}


def encode_number(n: int) -> list[int]:
    """Decimal digits of a nonnegative integer, most significant first."""
    if n < 0:
        raise ValueError("only nonnegative integers are encodable")
    return [DIGIT_BASE + int(c) for c in str(n)]


def decode_number(tokens: list[int]) -> int | None:
    """Parse a digit run back to an integer; None if any token is not a digit."""
    if not tokens or any(not 0 <= t <= 9 for t in tokens):
        return None
    return int("".join(str(t) for t in tokens))


def token_str(token: int) -> str:
    if 0 <= token <= 9:
        return str(token)
    return _NAMES.get(token, f"<{token}?>")


def render(tokens: list[int]) -> str:
    """Human-readable rendering of a token sequence, for logs and reports."""
    return "".join(token_str(t) for t in tokens)
