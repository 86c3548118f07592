"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: format errors exit 2,
numerical failures exit 3.
"""


class PromptfuseError(Exception):
    """Base class for all promptfuse errors."""


class BankFormatError(PromptfuseError):
    """A bank, blob, or manifest on disk is missing, truncated, or malformed."""


class DegenerateInputError(PromptfuseError, ValueError):
    """A vector is too close to zero (or otherwise degenerate) to operate on."""


class DegenerateFusionError(PromptfuseError):
    """Fusing a category's modalities produced a near-zero vector."""

    def __init__(self, category_id, message=None):
        self.category_id = category_id
        super().__init__(
            message or f"degenerate fusion for category {category_id}: "
            "modality prompts cancel to a near-zero vector"
        )


class ExcludedCategoryError(PromptfuseError):
    """A label refers to a category that the current mask excludes."""


class TrainingDivergedError(PromptfuseError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, step, loss):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch}, step {step}: loss = {loss!r}"
        )
