"""Signatures, digests and per-operation cost accounting.

Signatures are ECDSA over prime256v1 (secp256r1) with SHA-256, signed
deterministically (RFC 6979) and carried on the wire as fixed-size raw
``r || s`` (64 bytes) so encoded message sizes are predictable.
"""

from __future__ import annotations

import hashlib
import os
import statistics
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 33  # compressed SEC1 point
SEED_SIZE = 32

_CURVE = ec.SECP256R1()
_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_ALGORITHM = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)


def digest(data: bytes) -> bytes:
    """SHA-256 of ``data`` (32 bytes)."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    seed: bytes
    public_key: bytes
    _private: ec.EllipticCurvePrivateKey = field(repr=False, compare=False)


def gen_keypair(seed: bytes) -> KeyPair:
    """Derive a P-256 key pair deterministically from a 32-byte seed."""
    if len(seed) != SEED_SIZE:
        raise ValueError(f"seed must be {SEED_SIZE} bytes, got {len(seed)}")
    scalar = int.from_bytes(digest(b"irsbft-keygen" + seed), "big") % (_ORDER - 1) + 1
    private = ec.derive_private_key(scalar, _CURVE)
    public = private.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
    )
    return KeyPair(seed=seed, public_key=public, _private=private)


def derive_seed(master: int | bytes, *labels: object) -> bytes:
    """Stable 32-byte seed from a master seed and a label path."""
    if isinstance(master, int):
        master = master.to_bytes(16, "little", signed=True)
    text = "/".join(str(label) for label in labels).encode()
    return digest(master + b"|" + text)


def sign(key: KeyPair, data: bytes) -> bytes:
    der = key._private.sign(data, _ALGORITHM)
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


@lru_cache(maxsize=1024)
def _load_public(public_key: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, public_key)


def _verify_raw(public_key: bytes, data: bytes, signature: bytes) -> bool:
    try:
        pk = _load_public(public_key)
    except ValueError:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    if not (0 < r < _ORDER and 0 < s < _ORDER):
        return False
    try:
        pk.verify(encode_dss_signature(r, s), data, _ALGORITHM)
    except InvalidSignature:
        return False
    return True


_verify_cached = lru_cache(maxsize=1 << 16)(_verify_raw)


def verify(public_key: bytes, data: bytes, signature: bytes) -> bool:
    """Check ``signature`` over ``data``; malformed input yields False.

    Results are memoised: verification is a pure function of its inputs, and
    simulated replicas sharing one process re-check the same certificates.
    """
    if len(signature) != SIGNATURE_SIZE or len(public_key) != PUBLIC_KEY_SIZE:
        return False
    return _verify_cached(bytes(public_key), bytes(data), bytes(signature))


# -- cost accounting ---------------------------------------------------------


@dataclass(frozen=True)
class CryptoCosts:
    """Per-operation compute cost in seconds, charged by the virtual clock."""

    sign: float = 0.0
    verify: float = 0.0
    hash_per_kb: float = 0.0

    def scaled(self, factor: float) -> "CryptoCosts":
        return CryptoCosts(self.sign * factor, self.verify * factor, self.hash_per_kb * factor)


ZERO_COSTS = CryptoCosts()
# Order of magnitude of OpenSSL P-256 on one desktop core; used where runs
# must be reproducible across hosts.
REFERENCE_COSTS = CryptoCosts(sign=50e-6, verify=100e-6, hash_per_kb=4e-6)


_calibrated: CryptoCosts | None = None


def calibrate(samples: int = 1000, *, refresh: bool = False) -> CryptoCosts:
    """Median wall time of ``samples`` sign, verify and 1 KiB hash operations."""
    global _calibrated
    if _calibrated is not None and not refresh:
        return _calibrated
    key = gen_keypair(bytes(SEED_SIZE))
    messages = [os.urandom(64) for _ in range(samples)]
    block = os.urandom(1024)

    def timed(fn, arg) -> list[float]:
        out = []
        for a in arg:
            t0 = time.perf_counter()
            fn(a)
            out.append(time.perf_counter() - t0)
        return out

    sign_t = timed(lambda m: sign(key, m), messages)
    sigs = [sign(key, m) for m in messages]
    _load_public(key.public_key)
    verify_t = timed(lambda ms: _verify_raw(key.public_key, *ms), list(zip(messages, sigs)))
    hash_t = timed(digest, [block] * samples)
    _calibrated = CryptoCosts(
        sign=statistics.median(sign_t),
        verify=statistics.median(verify_t),
        hash_per_kb=statistics.median(hash_t),
    )
    return _calibrated


class CostMeter:
    """Counts crypto operations done by one node and the compute time they cost.

    The virtual clock reads ``elapsed`` inside a handler to timestamp sends;
    wall-clock runs pay the real compute and ignore the charge.
    """

    def __init__(self, costs: CryptoCosts = ZERO_COSTS):
        self.costs = costs
        self.elapsed = 0.0
        self.signs = 0
        self.verifies = 0
        self.hashed_bytes = 0
        self.sign_log: list[str] = []
        self.log_signs = False

    def sign(self, key: KeyPair, data: bytes, label: str = "") -> bytes:
        self.signs += 1
        self.elapsed += self.costs.sign
        if self.log_signs:
            self.sign_log.append(label)
        return sign(key, data)

    def verify(self, public_key: bytes, data: bytes, signature: bytes) -> bool:
        self.verifies += 1
        self.elapsed += self.costs.verify
        return verify(public_key, data, signature)

    def digest(self, data: bytes) -> bytes:
        self.hashed_bytes += len(data)
        self.elapsed += self.costs.hash_per_kb * len(data) / 1024
        return digest(data)

    def charge_hash(self, n_bytes: int) -> None:
        self.hashed_bytes += n_bytes
        self.elapsed += self.costs.hash_per_kb * n_bytes / 1024


# -- key files -----------------------------------------------------------------

DEFAULT_KEY_PATTERN = "replica-{id}.key"


def write_seed(path: str | os.PathLike, seed: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(seed.hex() + "\n")
    return path


def read_seed(path: str | os.PathLike) -> bytes:
    text = Path(path).read_text().strip()
    seed = bytes.fromhex(text)
    if len(seed) != SEED_SIZE:
        raise ValueError(f"{path}: expected {SEED_SIZE}-byte hex seed, got {len(seed)} bytes")
    return seed


def write_key_files(directory: str | os.PathLike, seeds: dict[int, bytes], pattern: str = DEFAULT_KEY_PATTERN) -> list[Path]:
    directory = Path(directory)
    return [write_seed(directory / pattern.format(id=rid), seed) for rid, seed in sorted(seeds.items())]


def load_key_files(directory: str | os.PathLike, ids, pattern: str = DEFAULT_KEY_PATTERN) -> dict[int, KeyPair]:
    directory = Path(directory)
    return {rid: gen_keypair(read_seed(directory / pattern.format(id=rid))) for rid in ids}
