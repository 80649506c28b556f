"""Loopback TLS-1.3-shaped handshake authenticated with MTC certificates.

Only the authentication part is real: trust-anchor negotiation, certificate
selection, certificate verification and a CertificateVerify signature over
the running transcript hash. Key exchange is an opaque exchange of
X25519MLKEM768-sized shares and Finished is an HMAC over the transcript.

Every message is framed as ``u8 type ; u24 length ; body``.
"""
from __future__ import annotations

import hashlib
import hmac
import os
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Sequence

from ..codec.certificate import MTCCertificate, decode_certificate, encode_certificate
from ..codec.schemes import KeyPair, SignatureSchemeId, VerifyPurpose, registry
from ..codec.taid import TrustAnchorRange
from ..codec.wire import Reader, Writer
from ..errors import CodecError, HandshakeFailure, MTCError
from ..logging.logger import get_logger
from ..relying.verifier import (
    CertificateInventory,
    RelyingTrust,
    VerificationOutcome,
    advertise_anchors,
    select_certificate,
    verify_certificate,
)
from .transport import ChannelEnd, bytes_transferred, duplex_pair

logger = get_logger()

RANDOM_BYTES = 32
CLIENT_SHARE_BYTES = 1216
SERVER_SHARE_BYTES = 1120
CV_CONTEXT = b" " * 64 + b"mtc-pki, server CertificateVerify" + b"\x00"


class MessageType(IntEnum):
    CLIENT_HELLO = 1
    SERVER_HELLO = 2
    CERTIFICATE = 11
    CERTIFICATE_VERIFY = 15
    FINISHED = 20
    ALERT = 21


def frame(msg_type: MessageType, body: bytes) -> bytes:
    return Writer().u8(msg_type).var_bytes(body, 3).bytes


def unframe(data: bytes) -> tuple[MessageType, bytes]:
    r = Reader(data)
    try:
        msg_type = MessageType(r.u8())
    except ValueError:
        raise CodecError("unknown handshake message type") from None
    body = r.var_bytes(3)
    r.finish()
    return msg_type, body


@dataclass(frozen=True)
class TranscriptMessage:
    sender: str
    msg_type: MessageType
    data: bytes

    @property
    def size(self) -> int:
        return len(self.data)


@dataclass
class HandshakeTranscript:
    messages: List[TranscriptMessage] = field(default_factory=list)

    def append(self, sender: str, data: bytes) -> None:
        msg_type, _ = unframe(data)
        self.messages.append(TranscriptMessage(sender, msg_type, data))

    def hash(self, upto: Optional[int] = None) -> bytes:
        """SHA-256 over the first *upto* messages (all by default)."""
        h = hashlib.sha256()
        for msg in self.messages[:upto]:
            h.update(msg.data)
        return h.digest()

    def find(self, msg_type: MessageType) -> Optional[int]:
        for i, msg in enumerate(self.messages):
            if msg.msg_type is msg_type:
                return i
        return None

    @property
    def total_bytes(self) -> int:
        return sum(m.size for m in self.messages)

    def sizes(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for m in self.messages:
            key = f"{m.sender}.{m.msg_type.name.lower()}"
            out[key] = out.get(key, 0) + m.size
        return out


def certificate_verify_message(transcript_hash: bytes) -> bytes:
    return CV_CONTEXT + transcript_hash


def encode_certificate_verify(scheme: SignatureSchemeId, signature: bytes) -> bytes:
    return Writer().u16(scheme).var_bytes(signature, 2).bytes


def check_certificate_verify(prior: Sequence[bytes], cv_body: bytes, cert: MTCCertificate) -> bool:
    """Verify a CertificateVerify body against the messages that preceded it."""
    try:
        r = Reader(cv_body)
        scheme = r.u16()
        signature = r.var_bytes(2)
        r.finish()
    except CodecError:
        return False
    if scheme != cert.entry.spki_algorithm:
        return False
    transcript_hash = hashlib.sha256(b"".join(prior)).digest()
    return registry.verify(
        cert.entry.spki_algorithm,
        cert.entity_public_key,
        certificate_verify_message(transcript_hash),
        signature,
        VerifyPurpose.CERTIFICATE_VERIFY,
    )


def _finished(secret: bytes, transcript_hash: bytes) -> bytes:
    key = hmac.new(secret, b"finished", hashlib.sha256).digest()
    return hmac.new(key, transcript_hash, hashlib.sha256).digest()


@dataclass
class ServerIdentity:
    inventory: CertificateInventory
    key: KeyPair


@dataclass
class HandshakeResult:
    transcript: HandshakeTranscript
    outcome: VerificationOutcome
    certificate: MTCCertificate
    cert_path_verifications: Dict[str, int]
    bytes_on_wire: int
    elapsed: float
    certificate_verify_skipped: bool = False

    @property
    def mode(self) -> str:
        return self.outcome.mode.value


class _Peer:
    """One side of the exchange, keeping its own view of the transcript."""

    def __init__(self, end: ChannelEnd) -> None:
        self.end = end
        self.transcript = HandshakeTranscript()

    def send(self, msg_type: MessageType, body: bytes) -> None:
        data = frame(msg_type, body)
        if msg_type is not MessageType.ALERT:
            self.transcript.append(self.end.name, data)
        self.end.send(data)

    def recv(self, expected: MessageType) -> bytes:
        data = self.end.recv()
        msg_type, body = unframe(data)
        if msg_type is MessageType.ALERT:
            raise HandshakeFailure(body.decode("utf-8", "replace") or "alert", "peer aborted the handshake")
        if msg_type is not expected:
            raise HandshakeFailure("unexpected_message", f"expected {expected.name}, got {msg_type.name}")
        self.transcript.append("server" if self.end.name == "client" else "client", data)
        return body

    def alert(self, reason: str) -> None:
        self.send(MessageType.ALERT, reason.encode())


def _run_server(peer: _Peer, identity: ServerIdentity, skip_cv: bool, errors: List[BaseException]) -> None:
    try:
        r = Reader(peer.recv(MessageType.CLIENT_HELLO))
        client_random = r.raw(RANDOM_BYTES)
        client_share = r.var_bytes(2)
        anchors = [TrustAnchorRange.decode(r) for _ in range(r.u16())]
        r.finish()

        server_share = os.urandom(SERVER_SHARE_BYTES)
        secret = hashlib.sha256(client_random + client_share + server_share).digest()
        peer.send(
            MessageType.SERVER_HELLO,
            Writer().raw(os.urandom(RANDOM_BYTES)).var_bytes(server_share, 2).bytes,
        )
        cert = select_certificate(identity.inventory, anchors)
        peer.send(MessageType.CERTIFICATE, Writer().var_bytes(encode_certificate(cert), 3).bytes)
        if not skip_cv:
            signature = identity.key.sign(certificate_verify_message(peer.transcript.hash()))
            peer.send(MessageType.CERTIFICATE_VERIFY, encode_certificate_verify(identity.key.scheme, signature))
        peer.send(MessageType.FINISHED, _finished(secret, peer.transcript.hash()))

        expected = _finished(secret, peer.transcript.hash())
        if not hmac.compare_digest(peer.recv(MessageType.FINISHED), expected):
            raise HandshakeFailure("bad_finished", "client Finished does not match")
    except HandshakeFailure as exc:
        logger.debug("Server side ended: %s", exc.reason)
        errors.append(exc)
    except Exception as exc:  # surfaced to the caller
        errors.append(exc)


def run_handshake(
    client: RelyingTrust,
    server: ServerIdentity,
    now: Optional[float] = None,
    skip_certificate_verify: bool = False,
) -> HandshakeResult:
    """Run one full handshake; raises :class:`HandshakeFailure` when the client rejects.

    The failure carries the verification outcome (if any) as ``outcome``.
    """
    started = time.perf_counter()
    client_end, server_end = duplex_pair()
    cpeer = _Peer(client_end)
    transcript = cpeer.transcript
    server_errors: List[BaseException] = []
    thread = threading.Thread(
        target=_run_server,
        args=(_Peer(server_end), server, skip_certificate_verify, server_errors),
        name="handshake-server",
        daemon=True,
    )
    thread.start()

    outcome: Optional[VerificationOutcome] = None
    try:
        client_random = os.urandom(RANDOM_BYTES)
        client_share = os.urandom(CLIENT_SHARE_BYTES)
        hello = Writer().raw(client_random).var_bytes(client_share, 2)
        anchors = advertise_anchors(client)
        hello.u16(len(anchors))
        for anchor in anchors:
            anchor.encode(hello)
        cpeer.send(MessageType.CLIENT_HELLO, hello.bytes)

        r = Reader(cpeer.recv(MessageType.SERVER_HELLO))
        r.raw(RANDOM_BYTES)
        server_share = r.var_bytes(2)
        r.finish()
        secret = hashlib.sha256(client_random + client_share + server_share).digest()

        r = Reader(cpeer.recv(MessageType.CERTIFICATE))
        cert_bytes = r.var_bytes(3)
        r.finish()
        before = registry.counts()
        outcome = verify_certificate(cert_bytes, client, now)
        after = registry.counts()
        cert_path = {k: after[k] - before.get(k, 0) for k in after}
        if not outcome.accepted:
            cpeer.alert(outcome.reason.value)
            raise HandshakeFailure(
                outcome.reason.value, f"certificate rejected ({outcome.mode.value})", outcome
            )
        cert = decode_certificate(cert_bytes)

        if not skip_certificate_verify:
            prior = [m.data for m in transcript.messages]
            cv_body = cpeer.recv(MessageType.CERTIFICATE_VERIFY)
            if not check_certificate_verify(prior, cv_body, cert):
                cpeer.alert("bad_certificate_verify")
                raise HandshakeFailure("bad_certificate_verify", "CertificateVerify signature invalid")

        expected = _finished(secret, transcript.hash())
        if not hmac.compare_digest(cpeer.recv(MessageType.FINISHED), expected):
            cpeer.alert("bad_finished")
            raise HandshakeFailure("bad_finished", "server Finished does not match")
        cpeer.send(MessageType.FINISHED, _finished(secret, transcript.hash()))
    except HandshakeFailure as exc:
        if exc.outcome is None:
            exc.outcome = outcome
        thread.join(timeout=1.0)
        raise
    except MTCError as exc:
        thread.join(timeout=1.0)
        raise HandshakeFailure("transport", str(exc), outcome) from exc

    thread.join(timeout=5.0)
    if server_errors:
        err = server_errors[0]
        if isinstance(err, HandshakeFailure):
            raise err
        raise HandshakeFailure("server_error", str(err)) from err

    return HandshakeResult(
        transcript=transcript,
        outcome=outcome,
        certificate=cert,
        cert_path_verifications=cert_path,
        bytes_on_wire=bytes_transferred(client_end, server_end),
        elapsed=time.perf_counter() - started,
        certificate_verify_skipped=skip_certificate_verify,
    )
