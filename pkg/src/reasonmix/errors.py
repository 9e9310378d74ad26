"""Exception hierarchy for the toolkit.

Every error raised by library code derives from :class:`ReasonMixError` so
callers (and the CLI) can distinguish toolkit failures from programming
errors.
"""

from __future__ import annotations


class ReasonMixError(Exception):
    """Base class for all toolkit errors."""


class ArchiveFormatError(ReasonMixError):
    """Checkpoint file is malformed (bad header, bad JSON, bad dtype tag)."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class ArchiveIntegrityError(ReasonMixError):
    """Header and payload disagree (offsets out of range, size mismatch)."""


class ValidationError(ReasonMixError):
    """A value violates a documented invariant (non-finite scalar, bad range)."""


class ShapeMismatchError(ReasonMixError):
    """Two tensors that must be aligned have different shapes or dtypes."""


class StructureMismatchError(ReasonMixError):
    """Two archives that must be aligned have different name sets."""

    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        parts = []
        if self.missing:
            parts.append(f"missing from second archive: {self.missing}")
        if self.extra:
            parts.append(f"only in second archive: {self.extra}")
        super().__init__("archive name sets differ; " + "; ".join(parts))


class ZeroNormError(ReasonMixError):
    """Cosine similarity is undefined for an all-zero tensor."""


class InputError(ReasonMixError):
    """Invalid model input (out-of-vocab token, empty prompt, too long)."""


class ConfigError(ReasonMixError):
    """Invalid model or run configuration."""


class TrainingDivergedError(ReasonMixError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"training diverged (non-finite loss) at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfidenceUndefinedError(ReasonMixError):
    """The confidence probe produced zero answer tokens."""


class RatingParseError(ReasonMixError):
    """The difficulty-rating completion did not contain a usable rating."""


class ProfilingError(ReasonMixError):
    """Generation failed while profiling a query at a specific coefficient."""

    def __init__(self, lam: float, detail: str):
        self.lam = lam
        super().__init__(f"profiling failed at lambda={lam}: {detail}")


class BarrierEvalError(ReasonMixError):
    """The loss evaluator failed during a barrier scan."""

    def __init__(self, lam: float, detail: str):
        self.lam = lam
        super().__init__(f"loss evaluation failed at lambda={lam}: {detail}")


class PipelineStageError(ReasonMixError):
    """A pipeline stage failed; carries the stage name and offending query."""

    def __init__(self, stage: str, query_id: str | None, detail: str):
        self.stage = stage
        self.query_id = query_id
        where = f"stage '{stage}'"
        if query_id is not None:
            where += f", query '{query_id}'"
        super().__init__(f"pipeline aborted in {where}: {detail}")
