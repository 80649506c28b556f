"""Client for the certificate authority HTTP API."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import requests

from ..codec.certificate import Cosignature, MTCCertificate, decode_certificate
from ..merkle.proofs import Checkpoint, ConsistencyProof
from ..web.client import ServiceClient
from .authority import TrustConfig
from .web import MAX_ENTRIES_PAGE


class CaClient(ServiceClient):
    def __init__(
        self,
        base_url: str,
        admission_token: str = "",
        timeout: float = 10.0,
        session: Optional[requests.Session] = None,
    ) -> None:
        super().__init__(base_url, timeout, session)
        self.admission_token = admission_token

    def _auth(self) -> dict:
        return {"Authorization": f"Bearer {self.admission_token}"}

    def issue(
        self,
        subject: str,
        dns_names: Sequence[str],
        scheme: str,
        public_key: bytes,
        lifetime: Optional[int] = None,
    ) -> MTCCertificate:
        payload = {
            "subject": subject,
            "dns_names": list(dns_names),
            "scheme": scheme,
            "public_key": public_key.hex(),
        }
        if lifetime is not None:
            payload["lifetime"] = lifetime
        body = self.post_json("/issue-cert", payload, headers=self._auth())
        return decode_certificate(bytes.fromhex(body["certificate"]))

    def trust_config(self) -> TrustConfig:
        return TrustConfig.from_dict(self.get_json("/trust-config"))

    def landmark_sequence(self) -> str:
        return self.get_text("/landmark-sequence")

    def revoke(self, lo: int, hi: int) -> List[List[int]]:
        return self.post_json("/revoke", {"lo": lo, "hi": hi}, headers=self._auth())["revoked"]

    def landmark_certificate(self, index: int, landmark: Optional[int] = None) -> MTCCertificate:
        params = {"index": index}
        if landmark is not None:
            params["landmark"] = landmark
        body = self.get_json("/landmark-cert", params=params)
        return decode_certificate(bytes.fromhex(body["certificate"]))

    def checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]:
        body = self.get_json("/checkpoint")
        return (
            Checkpoint.from_dict(body["checkpoint"]),
            tuple(Cosignature.from_dict(c) for c in body.get("cosignatures", [])),
        )

    def consistency_proof(self, old_size: int, new_size: int) -> ConsistencyProof:
        body = self.get_json("/proof/consistency", params={"old": old_size, "new": new_size})
        return ConsistencyProof.from_list(body["proof"])

    def fetch_entries(self, start: int, end: int) -> List[bytes]:
        """Page through ``/entries``; the result is short if the CA stops serving."""
        out: List[bytes] = []
        while start + len(out) < end:
            offset = start + len(out)
            count = min(end - offset, MAX_ENTRIES_PAGE)
            page = self.get_json("/entries", params={"start": offset, "count": count})["entries"]
            if not page:
                break
            out.extend(bytes.fromhex(item["entry"]) for item in page)
            if len(page) < count:
                break
        return out
