"""Client for the mirror HTTP API."""
from __future__ import annotations

from typing import Optional, Tuple

import requests

from ..codec.certificate import Cosignature
from ..errors import TransportError
from ..merkle.hashing import HASH_SIZE
from ..merkle.proofs import Checkpoint, ConsistencyProof, InclusionProof, SubtreeRange
from ..web.client import ServiceClient
from .replica import Tile


class MirrorClient(ServiceClient):
    def __init__(self, base_url: str, timeout: float = 5.0, session: Optional[requests.Session] = None) -> None:
        super().__init__(base_url, timeout, session)

    def checkpoint(self) -> Tuple[Checkpoint, Tuple[Cosignature, ...]]:
        body = self.get_json("/checkpoint")
        return (
            Checkpoint.from_dict(body["checkpoint"]),
            tuple(Cosignature.from_dict(c) for c in body.get("cosignatures", [])),
        )

    def tile(self, level: int, index: int) -> Tile:
        data = self._request("GET", f"/tile/{level}/{index}").content
        if len(data) % HASH_SIZE:
            raise TransportError(f"tile {level}/{index} has a partial hash")
        return Tile(level, index, tuple(data[i:i + HASH_SIZE] for i in range(0, len(data), HASH_SIZE)))

    def entry(self, index: int) -> bytes:
        return bytes.fromhex(self.get_json(f"/entry/{index}")["entry"])

    def inclusion_proof(self, index: int, rng: SubtreeRange) -> InclusionProof:
        body = self.get_json("/proof/inclusion", params={"index": index, "start": rng.start, "end": rng.end})
        return InclusionProof.from_list(body["proof"])

    def consistency_proof(self, old_size: int, new_size: int) -> ConsistencyProof:
        body = self.get_json("/proof/consistency", params={"old": old_size, "new": new_size})
        return ConsistencyProof.from_list(body["proof"])

    def subtree_proof(self, rng: SubtreeRange, size: int) -> Tuple[bytes, ConsistencyProof]:
        body = self.get_json("/proof/subtree", params={"start": rng.start, "end": rng.end, "size": size})
        return bytes.fromhex(body["subtree_root"]), ConsistencyProof.from_list(body["proof"])
