"""Short signatures, the public token bit hash and the watermark key matrix.

Signatures are BLS over the BN254 pairing curve: the secret key is a scalar,
the public key a G2 point, and a signature is ``sk * H(m)`` in G1, compressed
to 32 bytes. That gives 256-bit, deterministic, publicly verifiable
signatures, which is what the embedding pipeline needs.
"""
from __future__ import annotations

import base64
import hashlib
import json
import secrets
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from py_ecc.optimized_bn128 import (
    FQ,
    FQ2,
    FQ12,
    G1,
    G2,
    b2,
    curve_order,
    field_modulus,
    final_exponentiate,
    is_inf,
    is_on_curve,
    multiply,
    neg,
    normalize,
    pairing,
)

SIG_BYTES = 32
SIG_BITS = 8 * SIG_BYTES
SK_HEADER = "bileve-secret-key v1"
PK_HEADER = "bileve-public-key v1"
KEYMATRIX_HEADER = "bileve-keymatrix v1"

_HASH_DST = b"bileve:bn254:g1:sha256:try-and-increment"
_P = field_modulus


def encode_message(ids) -> bytes:
    """Length-prefixed, fixed-width (4 byte) big-endian encoding of token ids."""
    ids = [int(i) for i in ids]
    out = bytearray(len(ids).to_bytes(4, "big"))
    for i in ids:
        out += i.to_bytes(4, "big")
    return bytes(out)


def message_digest(ids) -> bytes:
    return hashlib.sha256(encode_message(ids)).digest()


def _sqrt(a: int):
    # p = 3 mod 4
    r = pow(a, (_P + 1) // 4, _P)
    return r if r * r % _P == a % _P else None


def hash_to_g1(digest: bytes):
    ctr = 0
    while True:
        h = hashlib.sha256(_HASH_DST + ctr.to_bytes(4, "big") + digest).digest()
        x = int.from_bytes(h, "big") % _P
        y = _sqrt((x * x * x + 3) % _P)
        if y is not None:
            if y & 1:
                y = _P - y
            return (FQ(x), FQ(y), FQ(1))
        ctr += 1


def compress_g1(pt) -> bytes:
    x, y = normalize(pt)
    xi, yi = int(x), int(y)
    return ((yi & 1) << 255 | xi).to_bytes(SIG_BYTES, "big")


def decompress_g1(data: bytes):
    """Inverse of :func:`compress_g1`; ``None`` when ``data`` is not a point."""
    if len(data) != SIG_BYTES:
        return None
    v = int.from_bytes(data, "big")
    odd, x = v >> 255, v & ((1 << 255) - 1)
    if x >= _P:
        return None
    y = _sqrt((x * x * x + 3) % _P)
    if y is None:
        return None
    if (y & 1) != odd:
        y = _P - y
    return (FQ(x), FQ(y), FQ(1))


def _g2_to_bytes(pt) -> bytes:
    x, y = normalize(pt)
    return b"".join(int(c).to_bytes(32, "big") for c in (*x.coeffs, *y.coeffs))


@lru_cache(maxsize=64)
def _g2_from_bytes(data: bytes):
    if len(data) != 128:
        raise ValueError("malformed public key: expected 128 bytes")
    c = [int.from_bytes(data[i:i + 32], "big") for i in range(0, 128, 32)]
    if any(v >= _P for v in c):
        raise ValueError("malformed public key: coordinate out of range")
    pt = (FQ2([c[0], c[1]]), FQ2([c[2], c[3]]), FQ2.one())
    if not is_on_curve(pt, b2) or not is_inf(multiply(pt, curve_order)):
        raise ValueError("malformed public key: not a G2 point")
    return pt


@dataclass(frozen=True)
class KeyPair:
    sk: bytes = field(repr=False)
    pk: bytes

    @property
    def fingerprint(self) -> str:
        return pk_fingerprint(self.pk)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "secret.key").write_text(f"{SK_HEADER}\n{base64.b64encode(self.sk).decode()}\n")
        (d / "public.key").write_text(f"{PK_HEADER}\n{base64.b64encode(self.pk).decode()}\n")

    @classmethod
    def load(cls, directory) -> "KeyPair":
        d = Path(directory)
        return cls(_read_keyfile(d / "secret.key", SK_HEADER), load_public_key(d / "public.key"))


def _read_keyfile(path, header):
    lines = Path(path).read_text().split()
    if len(lines) < 2 or " ".join(lines[:-1]) != header:
        raise ValueError(f"{path}: expected header {header!r}")
    return base64.b64decode(lines[-1], validate=True)


def load_public_key(path) -> bytes:
    return _read_keyfile(path, PK_HEADER)


def pk_fingerprint(pk: bytes) -> str:
    return hashlib.sha256(pk).hexdigest()[:16]


def keygen(seed: bytes | None = None) -> KeyPair:
    if seed is None:
        sk = secrets.randbelow(curve_order - 1) + 1
    else:
        wide = hashlib.sha512(b"bileve-keygen" + bytes(seed)).digest()
        sk = int.from_bytes(wide, "big") % (curve_order - 1) + 1
    pk = multiply(G2, sk)
    return KeyPair(sk.to_bytes(32, "big"), _g2_to_bytes(pk))


def sign_message(sk: bytes, message, m: int | None = None) -> np.ndarray:
    """Signature bits (big-endian within each byte) of the digest of ``message``."""
    if m is not None and len(message) != m:
        raise ValueError(f"message must have {m} tokens, got {len(message)}")
    scalar = int.from_bytes(sk, "big") % curve_order
    if scalar == 0:
        raise ValueError("invalid secret key")
    sig = multiply(hash_to_g1(message_digest(message)), scalar)
    return bits_from_bytes(compress_g1(sig))


def bits_from_bytes(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bytes_from_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


@lru_cache(maxsize=4096)
def _verify(pk: bytes, digest: bytes, sig: bytes) -> bool:
    Q = _g2_from_bytes(pk)
    sigma = decompress_g1(sig)
    if sigma is None:
        return False
    f = pairing(Q, hash_to_g1(digest), False) * pairing(neg(G2), sigma, False)
    return final_exponentiate(f) == FQ12.one()


def verify_signature(pk: bytes, message, bits) -> bool:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (SIG_BITS,):
        raise ValueError(f"signature must have {SIG_BITS} bits")
    return _verify(bytes(pk), message_digest(message), bytes_from_bits(bits))


def token_bit_hash(token_id: int) -> int:
    """Parity of the first SHA-256 byte of the token id. Public and unkeyed."""
    return hashlib.sha256(int(token_id).to_bytes(4, "big")).digest()[0] & 1


@lru_cache(maxsize=16)
def bit_table(K: int) -> np.ndarray:
    table = np.fromiter((token_bit_hash(i) for i in range(K)), dtype=np.uint8, count=K)
    table.setflags(write=False)
    return table


def token_bits(ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.zeros(0, dtype=np.uint8)
    size = 1 << max(10, int(ids.max()).bit_length())
    return bit_table(size)[ids]


def seed_to_int(seed: bytes) -> int:
    return int.from_bytes(hashlib.sha256(b"bileve-keymatrix" + bytes(seed)).digest(), "big")


class KeyMatrix:
    """``n`` key vectors of length ``K`` drawn i.i.d. from U[0, 1].

    Row for 0-based continuation position ``t`` under shift ``d`` is
    ``xi[(d + t) % n]``. Only ``(seed, n, K)`` is ever persisted.
    """

    def __init__(self, seed: bytes, n: int, K: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        if K < 2:
            raise ValueError("K must be >= 2")
        self.seed = bytes(seed)
        self.n = int(n)
        self.K = int(K)
        rng = np.random.Generator(np.random.PCG64(seed_to_int(self.seed)))
        self.xi = rng.random((self.n, self.K))
        self.xi.setflags(write=False)

    @classmethod
    def from_array(cls, xi) -> "KeyMatrix":
        """Wrap an explicit ``(n, K)`` array (fixtures and hand-built examples)."""
        xi = np.array(xi, dtype=np.float64)
        if xi.ndim != 2:
            raise ValueError("xi must be 2-D")
        obj = cls.__new__(cls)
        obj.seed, obj.n, obj.K = b"", xi.shape[0], xi.shape[1]
        obj.xi = xi
        obj.xi.setflags(write=False)
        return obj

    @cached_property
    def ranks(self) -> np.ndarray:
        """Ascending rank of every entry within its row (ties by token id)."""
        order = np.argsort(self.xi, axis=1, kind="stable")
        ranks = np.empty_like(order, dtype=np.int32)
        np.put_along_axis(ranks, order, np.arange(self.K, dtype=np.int32)[None, :], axis=1)
        ranks.setflags(write=False)
        return ranks

    @cached_property
    def col_ranks(self) -> np.ndarray:
        """Ascending rank of every entry within its column (ties by row)."""
        order = np.argsort(self.xi, axis=0, kind="stable")
        ranks = np.empty_like(order, dtype=np.int32)
        np.put_along_axis(ranks, order, np.arange(self.n, dtype=np.int32)[:, None], axis=0)
        ranks.setflags(write=False)
        return ranks

    def row_index(self, t: int, d: int = 0) -> int:
        return (d + t) % self.n

    def row(self, t: int, d: int = 0) -> np.ndarray:
        return self.xi[self.row_index(t, d)]

    def values(self, tokens, d: int = 0) -> np.ndarray:
        """Key value of each token at its own position under shift ``d``."""
        tokens = np.asarray(tokens, dtype=np.int64)
        rows = (d + np.arange(len(tokens))) % self.n
        return self.xi[rows, tokens]

    def to_dict(self) -> dict:
        return {"seed": self.seed.hex(), "n": self.n, "K": self.K}

    def save(self, path) -> None:
        Path(path).write_text(KEYMATRIX_HEADER + "\n" + json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "KeyMatrix":
        header, body = Path(path).read_text().split("\n", 1)
        if header.strip() != KEYMATRIX_HEADER:
            raise ValueError(f"{path}: expected header {KEYMATRIX_HEADER!r}")
        d = json.loads(body)
        return cls(bytes.fromhex(d["seed"]), d["n"], d["K"])

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def gen_key_matrix(seed: bytes, n: int, K: int) -> KeyMatrix:
    return KeyMatrix(seed, n, K)
