"""Main entry point for the mtc-pki command line.

One binary, one subcommand per role (``ca``, ``cosigner``, ``mirror``,
``distributor``), client commands (``issue``, ``verify``, ``revoke``) and the
reproduction flows (``demo``, ``bench``, ``tables``).

Exit codes: 0 success, 1 verification or handshake reject, 2 usage error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .ca.client import CaClient
from .codec.certificate import encode_certificate
from .codec.schemes import SignatureSchemeId, load_or_create_keypair
from .config import manager as config_manager
from .config.manager import CommandConfig
from .demo import FAIL_INJECTIONS, DemoStageError, run_demo, stage_summary
from .errors import InvalidRequest, MTCError
from .handshake import bench as bench_mod
from .handshake import sizes
from .logging.logger import get_logger, set_log_level, use_role_log
from .relying.revocation import RevokedRanges
from .relying.verifier import RelyingTrust, verify_certificate
from .roles import build_ca, build_cosigner, build_distributor, build_mirror, read_token

logger = get_logger()

VERSION = "2026-10-18 09:40:12"

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def log_version_info():
    logger.info(f"==== mtc_pki.main VERSION: {VERSION} ====")
    config_manager.log_version_info()


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_listen(p: argparse.ArgumentParser) -> None:
    p.add_argument("--listen", help="host:port to bind (':8440' binds all interfaces)")
    p.add_argument("--data-dir", help="directory for the role's persistent state")


def _add_key(p: argparse.ArgumentParser) -> None:
    p.add_argument("--key-file", help="signing key file, created on first run")
    p.add_argument("--scheme", help="scheme for a new key: ed25519, ecdsa-p256, mldsa65-emulated")
    p.add_argument("--cosigner-id", help="trust anchor ID of this cosigner, e.g. 32473.2.1")


def _add_lifecycle(p: argparse.ArgumentParser) -> None:
    p.add_argument("--landmark-interval", type=int, help="seconds between landmarks")
    p.add_argument("--cert-lifetime", type=int, help="certificate lifetime in seconds")
    p.add_argument("--max-landmarks", type=int, help="active landmark window (0 derives it)")


def _add_ca_url(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mtca-url", help="base URL of the certificate authority")


def _add_token(p: argparse.ArgumentParser) -> None:
    p.add_argument("--admission-token-file", help="file holding the CA admission token")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtc-pki",
        description="Merkle Tree Certificate PKI: issuance log, cosigners, mirror, "
                    "landmark distribution and relying-party verification.",
    )
    parser.add_argument("--config", help="TOML or JSON overlay applied over config.json")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("ca", help="run the certificate authority")
    _add_listen(p)
    _add_lifecycle(p)
    _add_token(p)
    p.add_argument("--log-id", help="trust anchor ID of the issuance log")
    p.add_argument("--checkpoint-interval", type=float, help="target seconds between checkpoints")
    p.add_argument("--policy-k", type=int, help="cosignatures required per checkpoint")
    p.add_argument("--require-mirror", action=argparse.BooleanOptionalAction, default=None,
                   help="require one cosignature from a mirror")
    p.add_argument("--cosigner-url", action="append", help="cosigner base URL (repeatable)")
    p.add_argument("--cosign-timeout", type=float, help="seconds to wait for cosignatures")
    p.add_argument("--public-url", help="URL advertised in the trust config")

    p = sub.add_parser("cosigner", help="run a witness cosigner")
    _add_listen(p)
    _add_key(p)

    p = sub.add_parser("mirror", help="run a mirror (replica and tiles, optionally a mirror cosigner)")
    _add_listen(p)
    _add_key(p)
    p.add_argument("--ca-url", dest="mtca_url", help="base URL of the certificate authority")
    p.add_argument("--cosign", action="store_true", default=None,
                   help="also cosign checkpoints as a mirror, with the key from --key-file")
    p.add_argument("--sync-interval", type=float, help="seconds between sync rounds")

    p = sub.add_parser("distributor", help="run the landmark distributor")
    _add_ca_url(p)
    _add_lifecycle(p)
    p.add_argument("--mirror-url", help="base URL of the mirror")
    p.add_argument("--interval", type=float, help="seconds between refreshes")
    p.add_argument("--out", help="landmark file to publish")
    p.add_argument("--policy-file", help="trust config JSON; fetched from the CA when omitted")

    p = sub.add_parser("issue", help="request a certificate from the CA")
    _add_ca_url(p)
    _add_token(p)
    p.add_argument("--subject", help="certificate subject")
    p.add_argument("--dns", action="append", default=[], help="DNS name (repeatable)")
    p.add_argument("--key-file", dest="entity_key_file", help="entity key file, created if missing")
    p.add_argument("--scheme", dest="entity_scheme", default="ecdsa-p256", help="scheme of a new entity key")
    p.add_argument("--lifetime", type=int, help="requested lifetime in seconds")
    p.add_argument("--landmark-for", type=int, metavar="INDEX",
                   help="fetch the landmark certificate for an issued index instead")
    p.add_argument("--out", dest="cert_out", required=True, help="certificate output file")
    p.add_argument("--trust-config-out", help="also save the CA trust config here")

    p = sub.add_parser("verify", help="verify a certificate file offline")
    p.add_argument("--cert", required=True, help="certificate file")
    p.add_argument("--trust-config", required=True, help="trust config JSON")
    p.add_argument("--landmarks", help="landmark file published by the distributor")
    p.add_argument("--clock-skew", type=int, help="validity tolerance in seconds")
    p.add_argument("--now", type=float, help="verification time (unix seconds)")
    p.add_argument("--revoked", action="append", default=[], metavar="LO:HI",
                   help="additional revoked index range (repeatable)")

    p = sub.add_parser("revoke", help="revoke an index range at the CA")
    _add_ca_url(p)
    _add_token(p)
    p.add_argument("--lo", type=int, required=True, help="first revoked index")
    p.add_argument("--hi", type=int, required=True, help="end of the range (exclusive)")

    p = sub.add_parser("demo", help="run every role in-process through the full lifecycle")
    p.add_argument("--data-dir", dest="demo_dir", help="keep demo state here instead of a temp dir")
    p.add_argument("--fail-inject", choices=FAIL_INJECTIONS, help="inject a fault")
    p.add_argument("--stale-distributor", action="store_true",
                   help="skip distribution so the handshake falls back to standalone")

    p = sub.add_parser("bench", help="run the verification and handshake microbenchmarks")
    p.add_argument("--scenario", action="append", dest="scenarios",
                   help=f"scenario to run (repeatable): {', '.join(bench_mod.SCENARIOS)}")
    p.add_argument("--iterations", type=int, default=bench_mod.DEFAULT_ITERATIONS)
    p.add_argument("--warmup", type=int, default=bench_mod.DEFAULT_WARMUP)
    p.add_argument("--handshake-iterations", type=int, help="defaults to --iterations")
    p.add_argument("--no-certificate-verify", action="store_true",
                   help="also report handshake bytes without CertificateVerify (sizes only)")
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.add_argument("--out", dest="report_out", help="write the report here instead of stdout")

    p = sub.add_parser("tables", help="print the analytic size tables")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", dest="report_out", help="write the tables here instead of stdout")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _install_signal_handlers(stop: threading.Event) -> None:
    def _handler(signum, _frame):
        logger.info("Received signal %d, shutting down", signum)
        stop.set()

    signal.signal(signal.SIGTERM, _handler)
    signal.signal(signal.SIGINT, _handler)


def _serve(cc: CommandConfig, builder: Callable) -> int:
    stop = threading.Event()
    _install_signal_handlers(stop)
    use_role_log(cc.subcommand)
    role = builder(cc.config)
    logger.info("Starting %s role", cc.subcommand)
    role.run_until(stop, cc.config.Listen)
    return EXIT_OK


def cmd_ca(cc: CommandConfig) -> int:
    return _serve(cc, build_ca)


def cmd_cosigner(cc: CommandConfig) -> int:
    return _serve(cc, build_cosigner)


def cmd_mirror(cc: CommandConfig) -> int:
    return _serve(cc, build_mirror)


def cmd_distributor(cc: CommandConfig) -> int:
    policy_file = Path(cc.args.policy_file) if cc.args.policy_file else None
    stop = threading.Event()
    _install_signal_handlers(stop)
    use_role_log(cc.subcommand)
    role = build_distributor(cc.config, policy_file)
    logger.info("Starting distributor, publishing to %s", cc.config.LandmarksFile)
    role.run_until(stop, cc.config.Listen)
    return EXIT_OK


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_issue(cc: CommandConfig) -> int:
    args = cc.args
    client = CaClient(cc.config.CaUrl, read_token(Path(cc.config.AdmissionTokenFile)))
    try:
        if args.landmark_for is not None:
            cert = client.landmark_certificate(args.landmark_for)
        else:
            if not args.subject or not args.entity_key_file:
                raise InvalidRequest("--subject and --key-file are required when issuing")
            key = load_or_create_keypair(Path(args.entity_key_file), SignatureSchemeId.parse(args.entity_scheme))
            cert = client.issue(args.subject, args.dns or [args.subject], key.scheme.label,
                                key.public_key, args.lifetime)
        if args.trust_config_out:
            Path(args.trust_config_out).write_text(
                json.dumps(client.trust_config().to_dict(), indent=2, sort_keys=True), encoding="utf-8"
            )
    finally:
        client.close()
    data = encode_certificate(cert)
    Path(args.cert_out).write_bytes(data)
    _print_json({
        "index": cert.index,
        "log_id": str(cert.log_id),
        "landmark": cert.is_landmark,
        "subtree": [cert.proof.range.start, cert.proof.range.end],
        "bytes": len(data),
        "out": args.cert_out,
    })
    return EXIT_OK


def _parse_ranges(items: Sequence[str]) -> RevokedRanges:
    ranges = RevokedRanges()
    for item in items:
        lo, sep, hi = item.partition(":")
        try:
            ranges.add(int(lo), int(hi))
        except ValueError:
            raise InvalidRequest(f"revoked range must be LO:HI, got {item!r}") from None
        if not sep:
            raise InvalidRequest(f"revoked range must be LO:HI, got {item!r}")
    return ranges


def cmd_verify(cc: CommandConfig) -> int:
    args = cc.args
    cert_path = Path(args.cert)
    if not cert_path.exists():
        raise InvalidRequest(f"certificate file {cert_path} does not exist")
    if not Path(args.trust_config).exists():
        raise InvalidRequest(f"trust config {args.trust_config} does not exist")
    trust = RelyingTrust.from_files(
        Path(args.trust_config),
        Path(args.landmarks) if args.landmarks else None,
        clock_skew=int(cc.config.ClockSkewSeconds),
    )
    if args.revoked:
        trust = RelyingTrust.build(
            trust.trust_config, trust.landmark_store, _parse_ranges(args.revoked), trust.clock_skew
        )
    outcome = verify_certificate(cert_path.read_bytes(), trust, args.now)
    _print_json(outcome.to_dict())
    return EXIT_OK if outcome.accepted else EXIT_REJECT


def cmd_revoke(cc: CommandConfig) -> int:
    args = cc.args
    client = CaClient(cc.config.CaUrl, read_token(Path(cc.config.AdmissionTokenFile)))
    try:
        revoked = client.revoke(args.lo, args.hi)
    finally:
        client.close()
    _print_json({"revoked": revoked})
    return EXIT_OK


def cmd_demo(cc: CommandConfig) -> int:
    args = cc.args
    report = run_demo(
        Path(args.demo_dir) if args.demo_dir else None,
        fail_inject=args.fail_inject,
        stale_distributor=args.stale_distributor,
    )
    _print_json(stage_summary(report))
    return EXIT_OK


def _write_report(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Report written to %s", out)
    else:
        sys.stdout.write(text)


def cmd_bench(cc: CommandConfig) -> int:
    args = cc.args
    scenarios = args.scenarios if args.scenarios is not None else list(bench_mod.SCENARIOS)
    report = bench_mod.bench(
        scenarios,
        iterations=args.iterations,
        warmup=args.warmup,
        handshake_iterations=args.handshake_iterations,
        without_certificate_verify=args.no_certificate_verify,
    )
    if args.format == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    else:
        text = bench_mod.render(report, args.format)
    _write_report(text, args.report_out)
    return EXIT_OK


def cmd_tables(cc: CommandConfig) -> int:
    args = cc.args
    _write_report(sizes.render(sizes.all_tables(), args.format), args.report_out)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[CommandConfig], int]] = {
    "ca": cmd_ca,
    "cosigner": cmd_cosigner,
    "mirror": cmd_mirror,
    "distributor": cmd_distributor,
    "issue": cmd_issue,
    "verify": cmd_verify,
    "revoke": cmd_revoke,
    "demo": cmd_demo,
    "bench": cmd_bench,
    "tables": cmd_tables,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, resolve configuration and run one subcommand."""
    args = build_parser().parse_args(argv)
    try:
        cc = CommandConfig.resolve(args)
        set_log_level(cc.config.LogLevel)
        log_version_info()
        started = time.perf_counter()
        code = COMMANDS[cc.subcommand](cc)
        logger.debug("%s finished in %.3fs", cc.subcommand, time.perf_counter() - started)
        return code
    except InvalidRequest as exc:
        print(f"mtc-pki {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"mtc-pki {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DemoStageError as exc:
        print(f"mtc-pki demo: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (MTCError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"mtc-pki {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
