"""Exception hierarchy shared by every layer.

Each error carries a stable ``code`` string so the HTTP surface and the CLI
can emit machine-readable error bodies without mapping tables.
"""

from __future__ import annotations


class XaiServiceError(Exception):
    """Base class; ``code`` is the wire-level error identifier."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_payload(self) -> dict:
        body = {"code": self.code, "message": str(self)}
        if self.details:
            body["details"] = self.details
        return body


# -- metrics ----------------------------------------------------------------

class ZeroDenominator(XaiServiceError):
    """Original confidence is 0; the sample must be excluded or re-predicted."""

    code = "zero_denominator"

    def __init__(self, message: str = "original confidence is 0", index: int | None = None):
        details = {} if index is None else {"index": index}
        super().__init__(message, **details)
        self.index = index


class InsufficientSamples(XaiServiceError):
    code = "insufficient_samples"


class EmptyRange(XaiServiceError):
    code = "empty_range"


class EmptyInput(XaiServiceError):
    code = "empty_input"


class NoCandidates(XaiServiceError):
    code = "no_candidates"


# -- imaging / saliency -------------------------------------------------------

class NegativeScore(XaiServiceError):
    code = "negative_score"


class InvalidFraction(XaiServiceError):
    code = "invalid_fraction"


class DimensionMismatch(XaiServiceError):
    code = "dimension_mismatch"


class ModelFailure(XaiServiceError):
    """A prediction call failed; ``placement`` is None for the baseline call."""

    code = "model_failure"

    def __init__(self, message: str, placement: int | None = None):
        super().__init__(message, placement=placement)
        self.placement = placement


# -- reference services -------------------------------------------------------

class UnknownGroup(XaiServiceError):
    code = "unknown_group"


class GroupHasChildren(XaiServiceError):
    code = "group_has_children"


# -- coordination center ------------------------------------------------------

class DuplicateId(XaiServiceError):
    code = "duplicate_id"


class InvalidKind(XaiServiceError):
    code = "invalid_kind"


class UnknownService(XaiServiceError):
    code = "unknown_service"


class KindMismatch(XaiServiceError):
    code = "kind_mismatch"


class MissingRole(XaiServiceError):
    code = "missing_role"


class UnknownSheet(XaiServiceError):
    code = "unknown_sheet"


class UnknownTicket(XaiServiceError):
    code = "unknown_ticket"


class UnknownPipeline(XaiServiceError):
    code = "unknown_pipeline"


class InvalidSlug(XaiServiceError):
    code = "invalid_slug"


class UnknownResult(XaiServiceError):
    code = "unknown_result"


class ServiceCallError(XaiServiceError):
    """A downstream service call failed (transport or error response)."""

    code = "service_call_failed"

    def __init__(self, message: str, service_id: str = "", url: str = "",
                 status: int | None = None):
        super().__init__(message, service_id=service_id, url=url, status=status)
        self.service_id = service_id
        self.url = url
        self.status = status


class NotRerunnable(XaiServiceError):
    code = "not_rerunnable"


# -- provenance ----------------------------------------------------------------

class DanglingReference(XaiServiceError):
    code = "dangling_reference"


class IncomparableShapes(XaiServiceError):
    code = "incomparable_shapes"

    def __init__(self, message: str, unmatched_roles: list[str] | None = None):
        super().__init__(message, unmatched_roles=unmatched_roles or [])
        self.unmatched_roles = unmatched_roles or []


class MissingService(XaiServiceError):
    code = "missing_service"


class SchemaViolation(XaiServiceError):
    code = "schema_violation"

    def __init__(self, message: str, line: int | None = None):
        details = {} if line is None else {"line": line}
        super().__init__(message, **details)
        self.line = line
