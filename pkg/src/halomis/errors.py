"""Exception hierarchy shared across the package."""


class HalomisError(Exception):
    """Base class for all package errors."""


# dataset
class DatasetError(HalomisError):
    pass


class RecordError(DatasetError):
    """A single JSONL/CSV record failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class MissingField(RecordError):
    pass


class InvalidLabel(RecordError):
    pass


class DuplicateId(RecordError):
    pass


class EmptyText(RecordError):
    pass


class EmptyDataset(DatasetError):
    pass


class TooFewSamples(DatasetError):
    pass


class NoPositives(DatasetError):
    pass


class DegenerateClass(DatasetError):
    pass


# llm backends
class BackendError(HalomisError):
    pass


class AuthMissing(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class ExhaustedRetries(BackendError):
    pass


class MalformedBackendReply(BackendError):
    pass


class NoStructuredBlock(HalomisError):
    pass


class MalformedBlock(HalomisError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


# prompts
class UnboundPlaceholder(HalomisError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)


class InsufficientExemplars(HalomisError):
    pass


class TemplateIntegrityError(HalomisError):
    pass


# features / models / evaluation
class AnalyzerFailed(HalomisError):
    def __init__(self, dimension, cause=None):
        self.dimension = dimension
        self.cause = cause
        msg = dimension if cause is None else f"{dimension}: {cause}"
        super().__init__(msg)


class IdMismatch(HalomisError):
    pass


class DegenerateLabels(HalomisError):
    pass


class NonFiniteFeature(HalomisError):
    pass


class FeatureNameMismatch(HalomisError):
    pass


class EmptyEvaluation(HalomisError):
    pass


class MissingFeatures(HalomisError):
    def __init__(self, sample_ids, hint="run `halomis extract` first"):
        self.sample_ids = list(sample_ids)
        shown = ", ".join(self.sample_ids[:10])
        more = "" if len(self.sample_ids) <= 10 else f" (+{len(self.sample_ids) - 10} more)"
        super().__init__(f"missing features for {len(self.sample_ids)} samples: {shown}{more}; {hint}")


class AllBackendsFailed(HalomisError):
    pass


class TooFewBackends(HalomisError):
    pass


class EmptyVote(HalomisError):
    pass


class ZeroVariance(HalomisError):
    pass
