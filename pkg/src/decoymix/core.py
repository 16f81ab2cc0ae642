"""Shared domain vocabulary: credentials, beacons and abstract crypto envelopes.

Crypto is simulated. Signatures are recomputable digests over (signer id,
payload) and encryption is key-gated access to the stored plaintext. The
simulation only needs to know who can read or validate what; the cost of real
primitives enters through the overhead cost model, not here.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

from .errors import DecryptionDenied, SigningWithExpiredCredential

# Wire-size constants, bytes.
PSEUDONYM_WIRE_BYTES = 140
CAM_WIRE_BYTES = 350
ENCRYPTION_OVERHEAD_BYTES = 16
SESSION_KEY_BYTES = 32

# Vehicle length is carried at 0.1 m precision.
LENGTH_PRECISION_M = 0.1


class CredentialKind(enum.Enum):
    PSEUDONYM = "pseudonym"
    CHAFF_PSEUDONYM = "chaff_pseudonym"
    LONG_TERM = "long_term"


@dataclass(frozen=True)
class Credential:
    """A short-lived pseudonymous certificate, a chaff twin of one, or a
    long-term certificate. ``holder`` is None while a chaff credential sits
    unassigned in an RSU pool."""

    id: bytes
    kind: CredentialKind
    issuer: str
    holder: str | None
    valid_from: float
    valid_to: float
    wire_size: int = PSEUDONYM_WIRE_BYTES

    def __post_init__(self) -> None:
        if len(self.id) != 16:
            raise ValueError("credential id must be 16 bytes")
        if not self.valid_from < self.valid_to:
            raise ValueError("valid_from must precede valid_to")
        if self.wire_size <= 0:
            raise ValueError("wire_size must be positive")

    def is_valid_at(self, now: float) -> bool:
        return self.valid_from <= now <= self.valid_to


def quantize_length(length_m: float) -> float:
    """Round a vehicle length to the carried 0.1 m precision."""
    return round(length_m / LENGTH_PRECISION_M) * LENGTH_PRECISION_M


# Adversary-facing beacon layout: little-endian, fixed width, declared field
# order. emitter and is_chaff are ground truth and stay out of this layout.
_BEACON_WIRE = struct.Struct("<16sdddddd8sI")

ADVERSARY_FACING_BEACON_FIELDS = (
    "pseudonym_id",
    "x",
    "y",
    "speed",
    "heading",
    "length",
    "timestamp",
    "link_id",
    "wire_size",
)


@dataclass(frozen=True)
class Beacon:
    """One cooperative awareness message.

    emitter and is_chaff exist for ground-truth bookkeeping only; every
    adversary-facing view (serialization, observation rows) excludes them.
    """

    pseudonym_id: bytes
    x: float
    y: float
    speed: float
    heading: float
    length: float
    timestamp: float
    link_id: bytes
    emitter: str
    is_chaff: bool
    wire_size: int = CAM_WIRE_BYTES

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if self.length <= 0:
            raise ValueError("length must be positive")
        steps = self.length / LENGTH_PRECISION_M
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("length must be a multiple of 0.1 m")
        if len(self.link_id) != 8:
            raise ValueError("link id must be 8 bytes")

    def to_wire(self) -> bytes:
        """Canonical adversary-facing serialization."""
        return _BEACON_WIRE.pack(
            self.pseudonym_id,
            self.x,
            self.y,
            self.speed,
            self.heading,
            self.length,
            self.timestamp,
            self.link_id,
            self.wire_size,
        )

    def adversary_view(self) -> dict:
        """Field map the adversary may see; never contains ground truth."""
        return {
            "pseudonym_id": self.pseudonym_id,
            "x": self.x,
            "y": self.y,
            "speed": self.speed,
            "heading": self.heading,
            "length": self.length,
            "timestamp": self.timestamp,
            "link_id": self.link_id,
            "wire_size": self.wire_size,
        }


def beacon_from_wire(blob: bytes) -> dict:
    """Decode the canonical layout back into an adversary-facing field map."""
    pid, x, y, speed, heading, length, ts, link, wire = _BEACON_WIRE.unpack(blob)
    return {
        "pseudonym_id": pid,
        "x": x,
        "y": y,
        "speed": speed,
        "heading": heading,
        "length": length,
        "timestamp": ts,
        "link_id": link,
        "wire_size": wire,
    }


@dataclass(frozen=True)
class SignedEnvelope:
    payload: bytes
    signer: bytes
    signature_tag: bytes


def _signature_tag(payload: bytes, signer_id: bytes) -> bytes:
    return hashlib.sha256(signer_id + b"|" + payload).digest()[:16]


def sign(payload: bytes, signer: Credential, now: float | None = None) -> SignedEnvelope:
    """Sign payload under a credential.

    now is the current simulation time; when given, signing with a credential
    outside its validity window raises SigningWithExpiredCredential.
    """
    if now is not None and not signer.is_valid_at(now):
        raise SigningWithExpiredCredential(
            f"credential {signer.id.hex()} not valid at t={now}"
        )
    return SignedEnvelope(payload, signer.id, _signature_tag(payload, signer.id))


def verify(env: SignedEnvelope, signer: Credential, now: float | None = None) -> bool:
    """True iff env was signed under this credential and, when now is given,
    the credential is valid at verification time."""
    if env.signer != signer.id:
        return False
    if now is not None and not signer.is_valid_at(now):
        return False
    return env.signature_tag == _signature_tag(env.payload, signer.id)


@dataclass(frozen=True)
class EncryptedEnvelope:
    recipient_key: bytes
    _plaintext: bytes = field(repr=False)

    @property
    def wire_size(self) -> int:
        return len(self._plaintext) + ENCRYPTION_OVERHEAD_BYTES


def encrypt(payload: bytes, recipient_key: bytes) -> EncryptedEnvelope:
    return EncryptedEnvelope(recipient_key, payload)


def open_envelope(env: EncryptedEnvelope, key: bytes) -> bytes:
    if key != env.recipient_key:
        raise DecryptionDenied("key does not match envelope recipient")
    return env._plaintext


def stable_u64(*parts: object) -> int:
    """Deterministic 64-bit value from arbitrary parts.

    Used wherever the simulation needs a platform-stable hash: seeding
    per-entity random streams, deriving link-layer ids. Never used for the
    chaff filter (which has its own arithmetic mixer).
    """
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")
