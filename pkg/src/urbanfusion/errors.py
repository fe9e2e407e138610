"""Exception hierarchy shared by every stage of the toolkit."""


class UrbanFusionError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRow(UrbanFusionError, ValueError):
    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {reason}")


class EmptyFile(UrbanFusionError, ValueError):
    pass


class EmptyDataset(UrbanFusionError, ValueError):
    pass


class IoFailure(UrbanFusionError, OSError):
    pass


class TooFewSamples(UrbanFusionError, ValueError):
    pass


class DownsampleRequested(UrbanFusionError, ValueError):
    pass


class NoOverlap(UrbanFusionError, ValueError):
    pass


class EmptyStream(UrbanFusionError, ValueError):
    pass


class TooShort(UrbanFusionError, ValueError):
    pass


class LengthMismatch(UrbanFusionError, ValueError):
    pass


class IndexMismatch(UrbanFusionError, ValueError):
    pass


class EmptyResult(UrbanFusionError, ValueError):
    pass


class DecompositionFailed(UrbanFusionError, RuntimeError):
    pass


class DegenerateStep(UrbanFusionError, ValueError):
    pass


class OriginInsideObstacle(UrbanFusionError, ValueError):
    pass


class DegeneratePolygon(UrbanFusionError, ValueError):
    pass


class InvalidSpan(UrbanFusionError, ValueError):
    pass


class EmptyWindow(UrbanFusionError, ValueError):
    pass


class SingleClass(UrbanFusionError, ValueError):
    pass


class EmptyTrain(UrbanFusionError, ValueError):
    pass


class UntrainedModel(UrbanFusionError, RuntimeError):
    pass


class TooFewRows(UrbanFusionError, ValueError):
    pass


class NonFiniteLoss(UrbanFusionError, FloatingPointError):
    pass


class NoConvergence(UrbanFusionError, RuntimeError):
    pass


class NoCoverage(UrbanFusionError, ValueError):
    pass


class TooFewFeatures(UrbanFusionError, ValueError):
    pass


class PredictorFailure(UrbanFusionError, RuntimeError):
    def __init__(self, predictor, subset, cause):
        self.predictor = predictor
        self.subset = tuple(subset)
        self.cause = cause
        super().__init__(f"{predictor} failed on subset {list(self.subset)}: {cause}")


class EmptyData(UrbanFusionError, ValueError):
    pass


class Untrained(UrbanFusionError, RuntimeError):
    pass


class NoGps(UrbanFusionError, ValueError):
    pass


class EmptyBins(UrbanFusionError, ValueError):
    pass


class ConfigInvalid(UrbanFusionError, ValueError):
    pass


class SpecInvalid(UrbanFusionError, ValueError):
    pass


class StageFailure(UrbanFusionError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
