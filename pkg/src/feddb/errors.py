"""Exception types shared across the package."""


class FedDBError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FedDBError):
    """Invalid configuration value or incompatible dimensions."""


class NumericalError(FedDBError):
    """NaN/Inf encountered during training.

    When raised out of a federation run, the attribute ``partial_log`` holds
    the per-round metrics collected before the failure.
    """

    def __init__(self, *args, partial_log=None):
        super().__init__(*args)
        self.partial_log = partial_log


class PartitionError(FedDBError):
    """Client data partitioning could not satisfy its constraints."""


class EstimatorError(FedDBError):
    """A prediction-prior estimate was requested on an empty unlabeled set."""


class ProtocolError(FedDBError):
    """Shape or weight mismatch during model aggregation."""


class MetricError(FedDBError):
    """Evaluation input violates a metric precondition."""
