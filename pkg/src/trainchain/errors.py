"""Exception types shared across the package."""


class TrainchainError(Exception):
    """Base class for all package errors."""


class EmptyBlock(TrainchainError):
    """A block's transaction list is empty."""


class CoinbaseViolation(TrainchainError):
    """A block does not carry exactly one leading coinbase transaction."""


class LinkageError(TrainchainError):
    """A block cannot be appended onto the current chain tip."""


class ForeignChain(TrainchainError):
    """Two chains do not share a genesis block."""


class BadArchitecture(TrainchainError):
    """Layer sizes are inconsistent or otherwise unusable."""


class BadInput(TrainchainError):
    """Feature vector does not match the model's input width."""


class BadModel(TrainchainError):
    """Model parameters contain non-finite values or malformed bytes."""


class Diverged(TrainchainError):
    """Training produced a non-finite loss."""


class EmptyDataset(TrainchainError):
    """A dataset with zero records where records are required."""


class PhaseClosed(TrainchainError):
    """A header commitment arrived outside the open commit window."""


class CommitCapExceeded(TrainchainError):
    """A miner tried to register more commitments than allowed per height."""


class DatasetUnavailable(TrainchainError):
    """No dataset is known for a height that needs verification."""


class ScheduleExhausted(TrainchainError):
    """The requester has no further test datasets to release."""


class ParseError(TrainchainError):
    """A config or metrics file could not be parsed."""


class DumpCorrupt(TrainchainError):
    """A chain dump is internally inconsistent or missing required bytes."""
