"""mtc-pki package.

Merkle Tree Certificate PKI toolkit: issuance log, certificate authority,
cosigners, mirror, landmark distribution and relying-party verification.
"""
__all__ = ["__version__"]
__version__ = "0.1.0"
