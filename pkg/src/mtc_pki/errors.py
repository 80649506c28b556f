"""Exception hierarchy shared by every role.

Each error carries a machine-readable ``code`` and the HTTP ``status`` the
web layer answers with (``{"error": {"code": ..., "message": ...}}``).
"""
from __future__ import annotations


class MTCError(Exception):
    """Base class for all mtc-pki errors."""

    code = "internal_error"
    status = 500

    def __init__(self, message: str = "", code: str | None = None) -> None:
        super().__init__(message or self.code)
        if code is not None:
            self.code = code

    @property
    def message(self) -> str:
        return str(self)

    def to_dict(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


class CodecError(MTCError):
    code = "malformed"
    status = 400


class InvalidRequest(MTCError):
    code = "invalid_request"
    status = 400


class LogRangeError(MTCError):
    code = "out_of_range"
    status = 404


class ProofUnavailable(MTCError):
    """Requested data lies in a pruned region or beyond the synced frontier."""

    code = "proof_unavailable"
    status = 410


class StorageError(MTCError):
    code = "storage_failure"
    status = 500


class CosignRefused(MTCError):
    """A cosigner declined to sign; ``code`` names the reason."""

    code = "refused"
    status = 409

    REASONS = frozenset({
        "fork_detected",
        "size_regression",
        "bad_proof",
        "entry_unavailable",
        "root_mismatch",
        "not_contained",
        "unknown_checkpoint",
    })

    def __init__(self, reason: str, message: str = "", index: int | None = None) -> None:
        if reason not in self.REASONS:
            raise ValueError(f"unknown refusal reason: {reason}")
        super().__init__(message or reason, code=reason)
        self.reason = reason
        self.index = index

    def to_dict(self) -> dict:
        body = {"refusal": True, "reason": self.reason, "message": self.message}
        if self.index is not None:
            body["index"] = self.index
        return body


class AuthorizationError(MTCError):
    code = "unauthorized"
    status = 401


class QuorumUnavailable(MTCError):
    code = "quorum_unavailable"
    status = 503


class NotReady(MTCError):
    code = "not_ready"
    status = 404


class IndexRevoked(MTCError):
    code = "revoked"
    status = 410


class SequenceFormatError(MTCError):
    code = "malformed_sequence"
    status = 400


class TransportError(MTCError):
    """A peer service could not be reached or answered with garbage."""

    code = "unreachable"
    status = 502


class HandshakeFailure(MTCError):
    code = "handshake_failure"
    status = 403

    def __init__(self, reason: str, message: str = "", outcome: object = None) -> None:
        super().__init__(message or reason)
        self.reason = reason
        self.outcome = outcome


def _error_classes() -> dict:
    out = {}
    stack = list(MTCError.__subclasses__())
    while stack:
        cls = stack.pop()
        out.setdefault(cls.code, cls)
        stack.extend(cls.__subclasses__())
    return out


def error_from_response(status: int, body: object) -> MTCError:
    """Rebuild the exception a peer service answered with."""
    if isinstance(body, dict) and body.get("refusal"):
        reason = body.get("reason", "")
        if reason in CosignRefused.REASONS:
            return CosignRefused(reason, body.get("message", ""), body.get("index"))
    if isinstance(body, dict) and isinstance(body.get("error"), dict):
        code = body["error"].get("code", "internal_error")
        message = body["error"].get("message", "")
        cls = _error_classes().get(code)
        if cls is None or cls in (CosignRefused, HandshakeFailure):
            err = MTCError(message, code=code)
        else:
            err = cls(message)
        err.status = status
        return err
    return TransportError(f"unexpected response (HTTP {status})")
