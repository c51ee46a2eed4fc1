"""
Exception hierarchy for the toolkit
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(ToolkitError, ValueError):
    """Invalid or unknown configuration value"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class InfeasibleConfigError(ConfigError):
    """Generator configuration that cannot produce a signal"""


class SignalFormatError(ToolkitError, ValueError):
    """Signal file that is not a valid raw i16 stream"""


class DimensionError(ToolkitError, ValueError):
    """Array shapes that do not agree"""


class AttackError(ToolkitError, RuntimeError):
    """Attack could not proceed"""


class ZeroGradientError(AttackError):
    """Loss gradient vanished; no descent direction exists"""


class TrainingDivergedError(ToolkitError, RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch}, step {step} (loss={loss}); "
            "lower the learning rate or tighten gradient clipping"
        )


class UsageError(ToolkitError):
    """Command-line arguments that cannot be acted on"""


class ModelFormatError(ToolkitError, ValueError):
    """Model file that cannot be read back"""


class DatasetFormatError(ToolkitError, ValueError):
    """Label file or manifest that cannot be parsed"""
