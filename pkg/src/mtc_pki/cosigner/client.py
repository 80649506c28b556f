"""Client for a remote cosigner."""
from __future__ import annotations

from typing import Optional

import requests

from ..codec.certificate import Cosignature
from ..merkle.proofs import Checkpoint, ConsistencyProof, SubtreeRange
from ..web.client import ServiceClient
from .core import CosignerInfo


class CosignerClient(ServiceClient):
    def __init__(self, base_url: str, timeout: float = 2.0, session: Optional[requests.Session] = None) -> None:
        super().__init__(base_url, timeout, session)

    def info(self) -> CosignerInfo:
        return CosignerInfo.from_dict(self.get_json("/cosigner-info"))

    def cosign(self, new: Checkpoint, proof: ConsistencyProof) -> Cosignature:
        """Request a cosignature; raises :class:`CosignRefused` on refusal."""
        body = self.post_json("/cosign", {
            "checkpoint": new.to_dict(),
            "consistency_proof": proof.to_list(),
        })
        return Cosignature.from_dict(body["cosignature"])

    def sign_subtree(
        self,
        rng: SubtreeRange,
        subtree_root: bytes,
        containment: ConsistencyProof,
        within: Checkpoint,
    ) -> Cosignature:
        body = self.post_json("/sign-subtree", {
            "start": rng.start,
            "end": rng.end,
            "subtree_root": subtree_root.hex(),
            "containment_proof": containment.to_list(),
            "checkpoint": within.to_dict(),
        })
        return Cosignature.from_dict(body["cosignature"])


class RemoteCosigner:
    """A cosigner reached over HTTP, shaped like an in-process :class:`Cosigner`."""

    def __init__(self, client: CosignerClient) -> None:
        self.client = client
        self._info: Optional[CosignerInfo] = None

    @property
    def info(self) -> CosignerInfo:
        if self._info is None:
            self._info = self.client.info()
        return self._info

    def cosign(self, new: Checkpoint, proof: ConsistencyProof) -> Cosignature:
        return self.client.cosign(new, proof)
