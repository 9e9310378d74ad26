"""Training-free reasoning-intensity estimation from answer confidence.

Each model is probed with the query plus an answer-inducing marker and
decoded greedily; its confidence is the geometric mean of the per-step
maximum token probabilities over the short answer it produces.  Two fused
signals, overall uncertainty and inter-model disagreement, pass through a
calibrated sigmoid to yield the blending coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfidenceUndefinedError, ValidationError
from .tensors import NamedTensorArchive
from .interpolate import check_aligned
from .toy import vocab
from .toy.model import GenerationParams, generate
from .toy.tasks import QueryRecord

DEFAULT_INDUCER: tuple[int, ...] = (vocab.ANS,)


@dataclass(frozen=True)
class CalibrationParams:
    mu: float = 0.3
    tau: float = 0.3

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class ConfidenceSignals:
    c_instruct: float
    c_thinking: float
    s_ambi: float
    s_dis: float
    s_final: float
    lam: float

    def to_dict(self) -> dict:
        return {
            "c_instruct": self.c_instruct,
            "c_thinking": self.c_thinking,
            "s_ambi": self.s_ambi,
            "s_dis": self.s_dis,
            "s_final": self.s_final,
            "lambda": self.lam,
        }


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def geometric_mean(probs: list[float] | tuple[float, ...]) -> float:
    """(prod p_t)^(1/n) computed in the log domain; exact for n=1.

    Never exceeds 1 and equals 1 only when every entry is 1.
    """
    if not probs:
        raise ConfidenceUndefinedError("geometric mean of zero probabilities is undefined")
    for p in probs:
        if not 0.0 < p <= 1.0:
            raise ValidationError(f"probabilities must lie in (0, 1], got {p}")
    mean_log = sum(math.log(p) for p in probs) / len(probs)
    return min(1.0, math.exp(mean_log))


def extract_confidence(
    model: NamedTensorArchive,
    query: QueryRecord,
    inducer: list[int] | tuple[int, ...] = DEFAULT_INDUCER,
    params: GenerationParams | None = None,
) -> float:
    """Geometric mean of per-step max probabilities over the induced answer.

    The probe always decodes greedily so the value is deterministic; the
    geometric mean is computed in the log domain, which is exact for n=1 and
    avoids underflow for long answers.
    """
    if not inducer:
        raise ValidationError("the answer-inducing token sequence must be nonempty")
    params = params or GenerationParams()
    probe = replace(params, temperature=0.0, top_p=1.0)
    _, max_probs = generate(model, list(query.prompt_tokens) + list(inducer), probe)
    if not max_probs:
        raise ConfidenceUndefinedError(
            f"query '{query.query_id}': probe produced zero answer tokens"
        )
    return geometric_mean(max_probs)


def fuse_signals(c_i: float, c_t: float, calib: CalibrationParams) -> ConfidenceSignals:
    """Combine two answer confidences into a reasoning intensity."""
    for label, c in (("instruct", c_i), ("thinking", c_t)):
        if not 0.0 < c <= 1.0:
            raise ValidationError(f"{label} confidence must lie in (0, 1], got {c}")
    s_ambi = 1.0 - (c_i + c_t) / 2.0
    s_dis = abs(c_i - c_t)
    s_final = s_ambi + s_dis
    lam = sigmoid((s_final - calib.mu) / calib.tau)
    lam = min(1.0, max(0.0, lam))
    return ConfidenceSignals(
        c_instruct=c_i, c_thinking=c_t, s_ambi=s_ambi, s_dis=s_dis, s_final=s_final, lam=lam
    )


def estimate_lambda_conf(
    instruct: NamedTensorArchive,
    thinking: NamedTensorArchive,
    query: QueryRecord,
    calib: CalibrationParams | None = None,
    gen_params: GenerationParams | None = None,
    inducer: list[int] | tuple[int, ...] = DEFAULT_INDUCER,
) -> ConfidenceSignals:
    """Probe both endpoint models and fuse their confidences."""
    check_aligned(instruct, thinking)
    calib = calib or CalibrationParams()
    c_i = extract_confidence(instruct, query, inducer, gen_params)
    c_t = extract_confidence(thinking, query, inducer, gen_params)
    return fuse_signals(c_i, c_t, calib)
