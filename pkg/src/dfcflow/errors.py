"""Exception types shared across the pipeline stages."""


class DfcError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(DfcError):
    """Invalid pipeline or registry configuration."""


class FixtureParseError(DfcError):
    """A fixture line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class RpcTransportError(DfcError):
    """Transport-level RPC failure; retryable from ``resume_from_block``."""

    def __init__(self, message: str, resume_from_block: int):
        super().__init__(f"{message} (resume from block {resume_from_block})")
        self.resume_from_block = resume_from_block


class RpcServerError(DfcError):
    """The node returned a JSON-RPC error object; not retryable."""

    def __init__(self, code: int, message: str):
        super().__init__(f"RPC error {code}: {message}")
        self.code = code


class DecodeError(DfcError):
    """A registry-matched log could not be decoded."""

    def __init__(self, message: str, tx_hash: str = "", log_index: int = -1):
        if tx_hash:
            message = f"{message} (tx {tx_hash}, log {log_index})"
        super().__init__(message)
        self.tx_hash = tx_hash
        self.log_index = log_index


class ClusterError(DfcError):
    """Partition construction failure."""


class SequencingError(DfcError):
    """An event arrived out of (block_number, log_index) order."""


class LedgerError(DfcError):
    """A ledger balance invariant was violated."""


class ValuationError(DfcError):
    """No usable price for (currency key, timestamp)."""

    def __init__(self, key: str, timestamp: int, reason: str):
        super().__init__(f"no usable {key} price at {timestamp}: {reason}")
        self.key = key
        self.timestamp = timestamp


class UndefinedCorrelationError(DfcError):
    """Pearson correlation undefined (zero variance input)."""


class InsufficientDataError(DfcError):
    """Fewer than the minimum usable paired periods for a correlation."""


class MissingCheckpointError(DfcError):
    """A stage's input checkpoint file does not exist."""

    def __init__(self, path, stage: str):
        super().__init__(
            f"missing checkpoint {path}; run the `{stage}` stage first"
        )
        self.path = path
        self.stage = stage
