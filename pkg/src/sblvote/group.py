"""Prime-order subgroup arithmetic mod a safe prime.

All exponents live in the scalar field Z_q and all elements in the order-q
subgroup of Z_p^*, where p = 2q + 1. For a safe prime that subgroup is exactly
the set of quadratic residues, so membership is a Legendre-symbol check rather
than a full exponentiation.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple, Union

import gmpy2
from gmpy2 import mpz

PRIMALITY_ROUNDS = 64
TEST_MIN_BITS = 16
PRODUCTION_MIN_BITS = 2048

# RFC 3526 group 14: 2048-bit MODP safe prime, p = 7 (mod 8) so 2 is a residue.
_RFC3526_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)


class GroupError(ValueError):
    """Invalid parameters, or bytes that do not decode to a group member."""


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    label: str = "test"
    _p: mpz = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.label not in ("test", "production"):
            raise GroupError(f"unknown security label {self.label!r}")
        object.__setattr__(self, "_p", mpz(self.p))

    @property
    def element_len(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_len(self) -> int:
        return (self.q.bit_length() + 7) // 8

    @property
    def q_bits(self) -> int:
        return self.q.bit_length()

    @property
    def generator(self) -> "GroupElement":
        return GroupElement(self, mpz(self.g))

    @property
    def identity(self) -> "GroupElement":
        return GroupElement(self, mpz(1))

    def is_member(self, value: int) -> bool:
        return 0 < value < self.p and gmpy2.jacobi(value, self._p) == 1

    def element(self, value: int) -> "GroupElement":
        """Membership-checked constructor."""
        if not self.is_member(value):
            raise GroupError(f"{value} is not in the order-{self.q} subgroup")
        return GroupElement(self, mpz(value))

    def scalar(self, value: int) -> "Scalar":
        """Reducing constructor: any integer becomes value mod q."""
        return Scalar(self, int(value) % self.q)

    def gexp(self, s: Union["Scalar", int]) -> "GroupElement":
        return self.generator ** s

    def element_from_bytes(self, data: bytes) -> "GroupElement":
        if len(data) != self.element_len:
            raise GroupError(f"element encoding must be {self.element_len} bytes, got {len(data)}")
        return self.element(int.from_bytes(data, "big"))

    def scalar_from_bytes(self, data: bytes) -> "Scalar":
        # Strict: an out-of-range encoding is rejected, never silently reduced.
        if len(data) != self.scalar_len:
            raise GroupError(f"scalar encoding must be {self.scalar_len} bytes, got {len(data)}")
        value = int.from_bytes(data, "big")
        if value >= self.q:
            raise GroupError("scalar encoding out of range")
        return Scalar(self, value)

    def to_dict(self) -> dict:
        return {"p": format(self.p, "x"), "q": format(self.q, "x"), "g": format(self.g, "x"), "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupParams":
        try:
            return cls(int(d["p"], 16), int(d["q"], 16), int(d["g"], 16), d.get("label", "test"))
        except (KeyError, TypeError, ValueError) as exc:
            raise GroupError(f"malformed group parameters: {exc}") from exc


class GroupElement:
    """Member of the order-q subgroup. Build through GroupParams.element()."""

    __slots__ = ("params", "_v")

    def __init__(self, params: GroupParams, value: mpz) -> None:
        self.params = params
        self._v = value

    @property
    def value(self) -> int:
        return int(self._v)

    def __int__(self) -> int:
        return int(self._v)

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.params, self._v * other._v % self.params._p)

    def __truediv__(self, other: "GroupElement") -> "GroupElement":
        return self * other.inverse()

    def __pow__(self, s: Union["Scalar", int]) -> "GroupElement":
        e = s.value if isinstance(s, Scalar) else int(s) % self.params.q
        if self.params.label == "production":
            if e == 0:
                return self.params.identity
            return GroupElement(self.params, gmpy2.powmod_sec(self._v, e, self.params._p))
        return GroupElement(self.params, gmpy2.powmod(self._v, e, self.params._p))

    def pow_public(self, s: Union["Scalar", int]) -> "GroupElement":
        """Variable-time exponentiation; only for exponents that are already public."""
        e = s.value if isinstance(s, Scalar) else int(s) % self.params.q
        if self._v == self.params.g and self.params.p.bit_length() >= COMB_MIN_BITS:
            return GroupElement(self.params, _comb_exp(self.params, e))
        return GroupElement(self.params, gmpy2.powmod(self._v, e, self.params._p))

    def inverse(self) -> "GroupElement":
        return GroupElement(self.params, gmpy2.invert(self._v, self.params._p))

    def to_bytes(self) -> bytes:
        return int(self._v).to_bytes(self.params.element_len, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GroupElement) and self._v == other._v and self.params == other.params

    def __hash__(self) -> int:
        return hash(int(self._v))

    def __repr__(self) -> str:
        return f"GroupElement({int(self._v)})"


class Scalar:
    __slots__ = ("params", "value")

    def __init__(self, params: GroupParams, value: int) -> None:
        self.params = params
        self.value = value

    def _coerce(self, other: Union["Scalar", int]) -> int:
        return other.value if isinstance(other, Scalar) else int(other)

    def __add__(self, other: Union["Scalar", int]) -> "Scalar":
        return Scalar(self.params, (self.value + self._coerce(other)) % self.params.q)

    __radd__ = __add__

    def __sub__(self, other: Union["Scalar", int]) -> "Scalar":
        return Scalar(self.params, (self.value - self._coerce(other)) % self.params.q)

    def __rsub__(self, other: int) -> "Scalar":
        return Scalar(self.params, (int(other) - self.value) % self.params.q)

    def __mul__(self, other: Union["Scalar", int]) -> "Scalar":
        return Scalar(self.params, self.value * self._coerce(other) % self.params.q)

    __rmul__ = __mul__

    def __neg__(self) -> "Scalar":
        return Scalar(self.params, -self.value % self.params.q)

    def inverse(self) -> "Scalar":
        return Scalar(self.params, pow(self.value, -1, self.params.q))

    def __int__(self) -> int:
        return self.value

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(self.params.scalar_len, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Scalar) and self.value == other.value and self.params == other.params

    def __hash__(self) -> int:
        return hash(self.value)

    def __repr__(self) -> str:
        return f"Scalar({self.value})"


TEST_GROUP = GroupParams(p=23, q=11, g=2, label="test")

COMB_MIN_BITS = 512
_COMB_WINDOW = 8


@lru_cache(maxsize=4)
def _comb_table(params: GroupParams) -> list:
    """rows[i][d] = g^(d * 256^i); turns a public-exponent g-power into ~bits/8 multiplications."""
    p = params._p
    rows = []
    base = mpz(params.g)
    for _ in range((params.q.bit_length() + _COMB_WINDOW - 1) // _COMB_WINDOW):
        row = [mpz(1), base]
        for _ in range(2, 1 << _COMB_WINDOW):
            row.append(row[-1] * base % p)
        rows.append(row)
        base = row[-1] * base % p
    return rows


def _comb_exp(params: GroupParams, e: int) -> mpz:
    p = params._p
    acc = mpz(1)
    for row, digit in zip(_comb_table(params), e.to_bytes((params.q.bit_length() + 7) // 8, "little")):
        if digit:
            acc = acc * row[digit] % p
    return acc


def validate_params(params: GroupParams) -> GroupParams:
    p, q, g = params.p, params.q, params.g
    if p != 2 * q + 1:
        raise GroupError("p is not of the form 2q + 1")
    if not (gmpy2.is_prime(q, PRIMALITY_ROUNDS) and gmpy2.is_prime(p, PRIMALITY_ROUNDS)):
        raise GroupError("p or q is not prime")
    if not 1 < g < p or pow(g, q, p) != 1:
        raise GroupError("g does not generate the order-q subgroup")
    if params.label == "production" and p.bit_length() < PRODUCTION_MIN_BITS:
        raise GroupError(f"production groups need at least {PRODUCTION_MIN_BITS} bits")
    return params


def generate_params(bits: int, seed: Optional[bytes] = None, label: str = "test") -> GroupParams:
    """Return a safe-prime group with a `bits`-bit modulus.

    With no seed, 2048 bits yields the RFC 3526 group; anything else is a
    deterministic search driven by ``seed`` (or OS entropy when absent).
    """
    floor = PRODUCTION_MIN_BITS if label == "production" else TEST_MIN_BITS
    if bits < floor:
        raise GroupError(f"{bits}-bit modulus below the {floor}-bit floor for label {label!r}")
    if seed is None and bits == 2048:
        return validate_params(GroupParams(_RFC3526_2048, (_RFC3526_2048 - 1) // 2, 2, label))
    rng = random.Random(seed) if seed is not None else random.SystemRandom()
    while True:
        q = rng.getrandbits(bits - 1) | (1 << (bits - 2)) | 1
        # q = 2 mod 3 keeps 2q + 1 off multiples of 3
        if q % 3 != 2:
            continue
        if not gmpy2.is_prime(q, 25):
            continue
        p = 2 * q + 1
        if gmpy2.is_prime(p, 25):
            break
    g = 2 if gmpy2.jacobi(2, p) == 1 else 4
    return validate_params(GroupParams(p, q, g, label))


@lru_cache(maxsize=None)
def named_params(name: Union[str, int]) -> GroupParams:
    """Resolve a scenario group name: "test-group", "production", or a bit size."""
    if name == "test-group":
        return TEST_GROUP
    if name == "production":
        return generate_params(2048, label="production")
    bits = int(name)
    if bits == 2048:
        return generate_params(2048, label="production")
    return generate_params(bits, seed=f"sbl-group/{bits}".encode())


# -- free-function surface -------------------------------------------------


def element_op(a: GroupElement, b: GroupElement) -> GroupElement:
    return a * b


def element_exp(a: GroupElement, s: Union[Scalar, int]) -> GroupElement:
    return a ** s


def element_inverse(a: GroupElement) -> GroupElement:
    return a.inverse()


def random_scalar(params: GroupParams, rng: random.Random) -> Scalar:
    """Uniform draw from [1, q-1]."""
    return Scalar(params, rng.randrange(1, params.q))


def encode_items(domain_tag: bytes, items: Sequence[bytes]) -> bytes:
    parts = [domain_tag, struct.pack(">I", len(items))]
    for item in items:
        parts.append(struct.pack(">I", len(item)))
        parts.append(item)
    return b"".join(parts)


def hash_to_scalar(params: GroupParams, domain_tag: bytes, items: Sequence[bytes]) -> Scalar:
    if not domain_tag:
        raise ValueError("domain tag must be nonempty")
    digest = hashlib.sha256(encode_items(domain_tag, items)).digest()
    return Scalar(params, int.from_bytes(digest, "big") % params.q)


def product(elements: Iterable[GroupElement], params: GroupParams) -> GroupElement:
    acc = mpz(1)
    for e in elements:
        acc = acc * e._v % params._p
    return GroupElement(params, acc)


_LOW64 = mpz((1 << 64) - 1)


@lru_cache(maxsize=4)
def _baby_steps(params: GroupParams, base: int, size: int) -> Tuple[dict, dict]:
    # keyed by the low 64 bits to keep large tables small; the rare clash goes to a side table
    table: dict = {}
    clashes: dict = {}
    cur = mpz(1)
    b = mpz(base)
    for j in range(size):
        key = int(cur & _LOW64)
        if key in table:
            clashes.setdefault(int(cur), j)
        else:
            table[key] = j
        cur = cur * b % params._p
    return table, clashes


def dlog_bounded(base: GroupElement, target: GroupElement, bound: int) -> Optional[int]:
    """Smallest e in [0, bound) with base**e == target, or None.

    Baby-step giant-step. Table sizes are rounded up to a power of two so
    repeated decodes against the same base share one cached table.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    params = base.params
    size = 1 << max(0, math.isqrt(bound - 1).bit_length())
    size = min(size, bound)
    table, clashes = _baby_steps(params, int(base._v), size)
    giant = gmpy2.invert(gmpy2.powmod(base._v, size, params._p), params._p)
    gamma = target._v
    for i in range((bound + size - 1) // size):
        for j in (table.get(int(gamma & _LOW64)), clashes.get(int(gamma))):
            if j is not None and gmpy2.powmod(base._v, j, params._p) == gamma:
                e = i * size + j
                return e if e < bound else None
        gamma = gamma * giant % params._p
    return None
