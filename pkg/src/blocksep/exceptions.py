"""Exception types shared across the package."""


class BlocksepError(Exception):
    """Base class for all package errors."""


class ConfigError(BlocksepError, ValueError):
    """Invalid configuration or invalid operation parameters."""


class ShapeError(BlocksepError, ValueError):
    """Dimension mismatch between model pieces or data tensors."""


class DegenerateModelError(BlocksepError, ArithmeticError):
    """Model or input collapsed to a state where estimation is meaningless
    (silent mixture, zero-mean factor, ...)."""


class NumericalError(BlocksepError, ArithmeticError):
    """Numerical failure (singular matrix, non-finite value) with location
    context attached where available."""

    def __init__(self, message, *, bin_index=None, frame_index=None,
                 step_index=None, iteration=None):
        parts = [message]
        if bin_index is not None:
            parts.append(f"f={bin_index}")
        if frame_index is not None:
            parts.append(f"n={frame_index}")
        if step_index is not None:
            parts.append(f"t={step_index}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(" ".join(parts))
        self.bin_index = bin_index
        self.frame_index = frame_index
        self.step_index = step_index
        self.iteration = iteration
