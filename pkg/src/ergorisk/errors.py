"""Exception hierarchy.

Every error carries the name of the pipeline stage that raised it and the
CLI exit code it maps to (3 = input validation, 4 = numeric/precondition).
"""

from __future__ import annotations


class ErgoRiskError(Exception):
    module = "ergorisk"
    exit_code = 4


class StreamError(ErgoRiskError):
    module = "sensor_streams"
    exit_code = 3


class StreamFormatError(StreamError):
    pass


class OrderingError(StreamError):
    pass


class ModalityError(StreamError):
    pass


class ScenarioError(StreamError):
    pass


class SyncError(ErgoRiskError):
    module = "sync_engine"


class MissingJointError(ErgoRiskError):
    module = "rula_scorer"


class HalError(ErgoRiskError):
    module = "hal_scorer"


class BachError(ErgoRiskError):
    module = "bach_scorer"


class UndefinedNormalizationError(BachError):
    pass


class ModelError(ErgoRiskError):
    module = "ml_models"


class EvaluationError(ErgoRiskError):
    module = "evaluation"


class ConfigError(ErgoRiskError):
    module = "cli"
    exit_code = 3
