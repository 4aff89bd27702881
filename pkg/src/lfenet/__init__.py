"""Low-light stereo image enhancement: filters, degradation model,
stereo interaction network, objectives and a small training harness,
all on a numpy-backed autodiff tensor core."""

__version__ = "0.1.0"

from .errors import (
    LfenetError, ContractError, ConfigError, CheckpointError,
    DataError, NumericError,
)

__all__ = [
    "LfenetError", "ContractError", "ConfigError", "CheckpointError",
    "DataError", "NumericError",
    "__version__",
]
