"""Desk-scale simulation of the PLS message sequence.

Per interval ``k`` the sequencer broadcasts::

    L_k = H(N_{k+1}) xor N_k
    S_k = E_{N_k}(J_k xor H(N_{k+1}))
    P_k = H(N_k)

A receiver checks ``H(L_{k-1} xor P_k) == P_{k-1}`` and then recovers
``J_{k-1} = P_k xor D_{L_{k-1} xor P_k}(S_{k-1})``.  The block root of
trust ``J`` is longer than one hash, so the mask ``H(N_{k+1})`` is repeated
to its length and the cipher runs in PCBC mode with a zero IV.  Each key
``N_k`` is used for exactly one message.
"""
from __future__ import annotations

import functools
import random
from dataclasses import dataclass
from typing import Iterator, Optional

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .rootoftrust import RootOfTrust, RotError, decode_rot
from .smt import H

SECRET_BYTES = 32
BLOCK = 16


def xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def _keystream(mask: bytes, length: int) -> bytes:
    return (mask * (length // len(mask) + 1))[:length]


def cipher_key(secret: bytes) -> bytes:
    """AES-128 key: the first 16 bytes of H(secret)."""
    return H(secret)[:16]


@functools.lru_cache(maxsize=64)
def _ecb_decryptor(key: bytes):
    # ECB contexts carry no state between whole-block updates, so one per key is reused
    return Cipher(algorithms.AES(key), modes.ECB()).decryptor()


def pcbc_encrypt(key: bytes, plaintext: bytes) -> bytes:
    """PCBC with a zero IV; plaintext is zero-padded to a block multiple."""
    plaintext += bytes(-len(plaintext) % BLOCK)
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    chain = bytes(BLOCK)
    out = []
    for i in range(0, len(plaintext), BLOCK):
        p = plaintext[i:i + BLOCK]
        c = enc.update(xor(p, chain))
        chain = xor(p, c)
        out.append(c)
    return b"".join(out)


def pcbc_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) % BLOCK:
        raise ValueError("ciphertext is not a whole number of blocks")
    # block decryptions are independent; only the xor chain is sequential
    raw = _ecb_decryptor(key).update(ciphertext)
    chain = 0
    out = []
    for i in range(0, len(ciphertext), BLOCK):
        c = int.from_bytes(ciphertext[i:i + BLOCK], "big")
        p = int.from_bytes(raw[i:i + BLOCK], "big") ^ chain
        out.append(p.to_bytes(BLOCK, "big"))
        chain = p ^ c
    return b"".join(out)


@dataclass(frozen=True)
class PlsInterval:
    k: int
    L: bytes
    S: bytes
    P: bytes


def gen_interval(k: int, secret: bytes, next_secret: bytes, J: bytes) -> PlsInterval:
    mask = H(next_secret)
    padded = J + bytes(-len(J) % BLOCK)
    S = pcbc_encrypt(cipher_key(secret), xor(padded, _keystream(mask, len(padded))))
    return PlsInterval(k, xor(mask, secret), S, H(secret))


def verify_interval(L_prev: bytes, P_k: bytes, P_prev: bytes) -> bool:
    if len(L_prev) != SECRET_BYTES or len(P_k) != SECRET_BYTES:
        return False
    return H(xor(L_prev, P_k)) == P_prev


class Rejected(Exception):
    """An S-message that fails the redundancy check after unlocking."""


def unlock_bytes(P_k: bytes, L_prev: bytes, S_prev: bytes) -> bytes:
    """Candidate plaintext of ``S_prev``, padding included."""
    secret = xor(L_prev, P_k)
    plain = pcbc_decrypt(cipher_key(secret), S_prev)
    return xor(plain, _keystream(P_k, len(plain)))


def unlock(P_k: bytes, L_prev: bytes, S_prev: bytes) -> tuple[RootOfTrust, bytes]:
    """Recover the previous interval's root of trust.

    Returns the decoded root of trust and its exact encoded bytes.  Raises
    ``Rejected`` when the plaintext fails validation, which is what a random
    or replayed S-message produces.
    """
    try:
        candidate = unlock_bytes(P_k, L_prev, S_prev)
        rot = decode_rot(candidate)
    except (RotError, ValueError) as exc:
        raise Rejected(str(exc)) from None
    return rot, candidate[:rot.byte_length]


class Sequencer:
    """Produces the broadcast stream; secrets come from a seeded generator."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)
        self._secret = self._fresh()
        self.k = 0

    def _fresh(self) -> bytes:
        return self._rng.randbytes(SECRET_BYTES)

    def emit(self, J: bytes) -> PlsInterval:
        nxt = self._fresh()
        msg = gen_interval(self.k, self._secret, nxt, J)
        self._secret = nxt
        self.k += 1
        return msg


@dataclass
class Receiver:
    """Follows the stream from an out-of-band authenticated anchor ``P_0``.

    ``feed`` returns the unlocked root of trust of the previous interval, or
    ``None`` for the first message.  A failed check raises, but the receiver
    still moves on to the new message so later honest intervals recover.
    """

    anchor: bytes
    _prev: Optional[PlsInterval] = None

    def feed(self, msg: PlsInterval) -> Optional[tuple[RootOfTrust, bytes]]:
        if self._prev is None:
            if msg.P != self.anchor:
                raise Rejected("first P-message does not match the anchor")
            self._prev = msg
            return None
        prev, self._prev = self._prev, msg
        if not verify_interval(prev.L, msg.P, prev.P):
            raise Rejected(f"interval {msg.k} does not verify against interval {prev.k}")
        return unlock(msg.P, prev.L, prev.S)


def run_chain(payloads: list[bytes], seed: int = 0) -> list[PlsInterval]:
    """Transcript for ``payloads``; one extra interval is appended so the last payload can be unlocked."""
    seq = Sequencer(seed)
    msgs = [seq.emit(J) for J in payloads]
    msgs.append(seq.emit(b""))
    return msgs


def transcript_lines(msgs: list[PlsInterval]) -> Iterator[str]:
    for msg in msgs:
        yield f"interval {msg.k}"
        yield f"L {msg.L.hex()}"
        yield f"S {msg.S.hex()}"
        yield f"P {msg.P.hex()}"
        yield ""
