import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from tmt import plschain as pls
from tmt.blockstore import build_block
from tmt.rootoftrust import Mode, RootOfTrust, decode_rot, encode_rot
from tmt.smt import H


def aes_block(key, block):
    return Cipher(algorithms.AES(key), modes.ECB()).encryptor().update(block)


def oracle_pcbc(key, data):
    prev_p, prev_c, out = bytes(16), bytes(16), b""
    for i in range(0, len(data), 16):
        p = data[i:i + 16]
        c = aes_block(key, bytes(a ^ b ^ x for a, b, x in zip(p, prev_p, prev_c)))
        out += c
        prev_p, prev_c = p, c
    return out


def test_aes_known_answer():
    key = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    assert pls.pcbc_encrypt(key, pt).hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


@pytest.mark.parametrize("size", [0, 1, 16, 40, 100, 161])
def test_pcbc_matches_oracle(size):
    rng = random.Random(size)
    key, data = rng.randbytes(16), rng.randbytes(size)
    padded = data + bytes(-size % 16)
    ct = pls.pcbc_encrypt(key, data)
    assert ct == oracle_pcbc(key, padded)
    assert pls.pcbc_decrypt(key, ct) == padded


def test_pcbc_error_propagates_forward():
    key = bytes(16)
    ct = bytearray(pls.pcbc_encrypt(key, bytes(64)))
    ct[0] ^= 1
    pt = pls.pcbc_decrypt(key, bytes(ct))
    assert all(pt[i:i + 16] != bytes(16) for i in range(0, 64, 16))
    with pytest.raises(ValueError):
        pls.pcbc_decrypt(key, bytes(15))


def test_cipher_key():
    assert pls.cipher_key(b"x" * 32) == H(b"x" * 32)[:16]


def sample_rots():
    rng = random.Random(1)
    empty = encode_rot(RootOfTrust(bytes(32), 1024, 0, Mode.EMPTY))
    recs = {i: bytes([i % 256]) for i in range(1024) if rng.random() < 0.1}
    full = encode_rot(build_block(1, recs, 1024).rot)
    return empty, full


def test_interval_formulas():
    n0, n1 = bytes(range(32)), bytes(range(32, 64))
    J = sample_rots()[1]
    msg = pls.gen_interval(0, n0, n1, J)
    assert msg.P == H(n0)
    assert msg.L == pls.xor(H(n1), n0)
    assert pls.verify_interval(msg.L, H(n1), msg.P)


def test_round_trip_lengths():
    for J in sample_rots():
        msgs = pls.run_chain([J], seed=4)
        assert len(msgs[0].S) >= len(J) and len(msgs[0].S) % 16 == 0
        rot, raw = pls.unlock(msgs[1].P, msgs[0].L, msgs[0].S)
        assert raw == J and encode_rot(rot) == J
    assert len(sample_rots()[0]) == 40
    assert 90 <= len(sample_rots()[1]) <= 110


def test_hundred_interval_chain():
    rng = random.Random(2)
    payloads = []
    for number in range(100):
        recs = {i: b"r" for i in range(256) if rng.random() < 0.1}
        payloads.append(encode_rot(build_block(number, recs, 256).rot))
    msgs = pls.run_chain(payloads, seed=7)
    rx = pls.Receiver(msgs[0].P)
    assert rx.feed(msgs[0]) is None
    for J, msg in zip(payloads, msgs[1:]):
        rot, raw = rx.feed(msg)
        assert raw == J


def test_wrong_anchor():
    msgs = pls.run_chain([sample_rots()[0]], seed=1)
    with pytest.raises(pls.Rejected):
        pls.Receiver(H(b"someone else")).feed(msgs[0])


def test_flipped_L_bit_fails_verification():
    msgs = pls.run_chain([sample_rots()[0]], seed=1)
    for k in range(256):
        bad = bytearray(msgs[0].L)
        bad[k // 8] ^= 0x80 >> (k % 8)
        assert not pls.verify_interval(bytes(bad), msgs[1].P, msgs[0].P)
    assert not pls.verify_interval(msgs[0].L[:31], msgs[1].P, msgs[0].P)


def test_random_s_messages_rejected():
    msgs = pls.run_chain([sample_rots()[1]], seed=3)
    rng = random.Random(0)
    size = len(msgs[0].S)
    for _ in range(5000):
        with pytest.raises(pls.Rejected):
            pls.unlock(msgs[1].P, msgs[0].L, rng.randbytes(size))


def test_replayed_s_rejected():
    J = sample_rots()[1]
    msgs = pls.run_chain([J, J, J], seed=5)
    with pytest.raises(pls.Rejected):
        pls.unlock(msgs[2].P, msgs[1].L, msgs[0].S)


def test_tamper_is_local():
    payloads = list(sample_rots()) * 3
    msgs = pls.run_chain(payloads, seed=6)
    tampered = list(msgs)
    s = bytearray(tampered[2].S)
    s[-1] ^= 1
    tampered[2] = pls.PlsInterval(2, tampered[2].L, bytes(s), tampered[2].P)
    rx = pls.Receiver(msgs[0].P)
    rx.feed(tampered[0])
    outcomes = []
    for msg in tampered[1:]:
        try:
            rx.feed(msg)
            outcomes.append(True)
        except pls.Rejected:
            outcomes.append(False)
    assert outcomes == [True, True, False, True, True, True]


def test_forged_p_breaks_one_step_only():
    msgs = pls.run_chain(list(sample_rots()) * 2, seed=8)
    forged = list(msgs)
    forged[2] = pls.PlsInterval(2, msgs[2].L, msgs[2].S, H(b"forged"))
    rx = pls.Receiver(msgs[0].P)
    rx.feed(forged[0])
    rx.feed(forged[1])
    with pytest.raises(pls.Rejected):
        rx.feed(forged[2])
    with pytest.raises(pls.Rejected):
        rx.feed(forged[3])
    rot, _ = rx.feed(forged[4])
    assert rot == decode_rot(sample_rots()[1])


def test_secrets_not_revealed_early():
    seq = pls.Sequencer(seed=11)
    secrets, msgs = [], []
    for _ in range(20):
        secrets.append(seq._secret)
        msgs.append(seq.emit(sample_rots()[0]))
    for k, secret in enumerate(secrets):
        for msg in msgs[:k + 1]:
            blob = msg.L + msg.S + msg.P
            assert secret not in blob
            assert H(secret) != msg.L


def test_transcript_lines():
    msgs = pls.run_chain([sample_rots()[0]], seed=0)
    lines = list(pls.transcript_lines(msgs))
    assert lines[0] == "interval 0" and lines[1] == f"L {msgs[0].L.hex()}"
    assert len(lines) == 10 and lines[4] == ""


def test_deterministic_sequencer():
    a = pls.run_chain([b"x" * 40], seed=42)
    b = pls.run_chain([b"x" * 40], seed=42)
    assert a == b
