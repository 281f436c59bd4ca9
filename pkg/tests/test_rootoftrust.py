import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmt import tunstall
from tmt.rootoftrust import (
    HEADER_BITS,
    REDUNDANCY_BITS,
    Mode,
    RootOfTrust,
    RotError,
    choose_mode,
    compressed_payload,
    decode_rot,
    encode_rot,
    list_width,
    search_extra_rounds,
)
from tmt.smt import H

ROOT = H(b"golden")

# n=16, m=3, list of positions 2, 7, 13, extra rounds 5; packed by hand from the field table
GOLDEN_LIST = "dd56de4137951d9c92681b03416ec15f886b4482a27e3a517d32f085244cbe5d00f0032a27d000000000"
# same bitmap compressed at w=8
GOLDEN_COMPRESSED = "dd56de4137951d9c92681b03416ec15f886b4482a27e3a517d32f085244cbe5d00f00305985f00000000"


def pack(root, n, m, flags, payload):
    bits = format(int.from_bytes(root, "big"), "0256b") + format(n - 1, "012b") + format(m, "012b")
    bits += format(flags, "08b") + payload + "0" * 32
    bits += "0" * (-len(bits) % 8)
    return int(bits, 2).to_bytes(len(bits) // 8, "big")


def random_bitmap(rng, n, m):
    pos = set(rng.sample(range(n), m))
    return "".join("1" if i in pos else "0" for i in range(n))


def test_golden_list():
    rot = RootOfTrust(ROOT, 16, 3, Mode.LIST, "001001111101", 4, 5)
    data = encode_rot(rot)
    assert data.hex() == GOLDEN_LIST
    assert data == pack(ROOT, 16, 3, 2 | 5 << 3, "001001111101")
    assert rot.bit_length == 12 + 320
    back = decode_rot(data)
    assert back == rot
    assert back.bitmap == "0010000100000100"


def test_golden_compressed():
    payload = compressed_payload("0010000100000100", 3, 8)
    rot = RootOfTrust(ROOT, 16, 3, Mode.COMPRESSED, payload, 8, 0)
    assert encode_rot(rot).hex() == GOLDEN_COMPRESSED
    assert decode_rot(bytes.fromhex(GOLDEN_COMPRESSED)).bitmap == "0010000100000100"


def test_empty_block():
    rot = RootOfTrust(bytes(32), 1024, 0, Mode.EMPTY)
    data = encode_rot(rot)
    assert len(data) == 40 and data[-4:] == bytes(4)
    assert decode_rot(data) == rot


def test_flags_layout():
    assert RootOfTrust(ROOT, 8, 1, Mode.COMPRESSED, "", 8, 31).flags == 0b11111101


@pytest.mark.parametrize("bad", [
    dict(n=0), dict(n=4097), dict(m=17), dict(w=6), dict(extra_rounds=32),
    dict(payload="0" * 12), dict(root=b"x"), dict(mode=Mode.EMPTY),
])
def test_encode_rejects(bad):
    fields = dict(root=ROOT, n=16, m=3, mode=Mode.LIST, payload="001001111101", w=4, extra_rounds=0)
    fields.update(bad)
    with pytest.raises(RotError):
        encode_rot(RootOfTrust(**fields))


def test_payload_limit():
    rng = random.Random(0)
    bm = random_bitmap(rng, 2048, 1000)
    with pytest.raises(RotError):
        encode_rot(RootOfTrust(ROOT, 2048, 1000, Mode.PLAIN, bm))


def test_any_redundancy_bit_rejects():
    data = bytes.fromhex(GOLDEN_LIST)
    # message is 332 bits, padded to 336: the last 36 bits are zero
    for k in range(36):
        bad = bytearray(data)
        bit = len(data) * 8 - 1 - k
        bad[bit // 8] ^= 0x80 >> (bit % 8)
        with pytest.raises(RotError):
            decode_rot(bytes(bad))


def test_trailing_zero_bytes_accepted():
    data = bytes.fromhex(GOLDEN_LIST) + bytes(11)
    assert decode_rot(data).payload == "001001111101"


def test_truncated_rejected():
    with pytest.raises(RotError):
        decode_rot(bytes.fromhex(GOLDEN_LIST)[:39])
    with pytest.raises(RotError):
        decode_rot(bytes(10))


def test_compressed_popcount_mismatch_rejected():
    # four ones encoded with the codebook for m = 3, then labelled m = 3
    payload = compressed_payload("0010000100100100", 3, 8)
    with pytest.raises(RotError):
        decode_rot(pack(ROOT, 16, 3, 1 | 4, payload))
    # a nonzero codeword after the bitmap is complete
    good = compressed_payload("0010000100000100", 3, 8)
    with pytest.raises(RotError):
        decode_rot(pack(ROOT, 16, 3, 1 | 4, good + "1" * 8))


def test_list_must_be_sorted():
    with pytest.raises(RotError):
        decode_rot(pack(ROOT, 16, 3, 2, "011100101101"))
    with pytest.raises(RotError):
        decode_rot(pack(ROOT, 16, 2, 2, "01110111"))


def test_plain_popcount_mismatch_rejected():
    with pytest.raises(RotError):
        decode_rot(pack(ROOT, 8, 2, 0, "10000000"))


def test_choose_mode():
    rng = random.Random(4)
    assert choose_mode(1024, 0, "0" * 1024) == (Mode.EMPTY, 4, "")
    bm = random_bitmap(rng, 1024, 102)
    mode, w, payload = choose_mode(1024, 102, bm)
    assert mode == Mode.COMPRESSED
    assert 482 <= len(payload) < 1020
    # a codebook built for p = m/n favours the 1-edge, so dense bitmaps compress too
    dense = random_bitmap(rng, 1024, 1020)
    mode, w, payload = choose_mode(1024, 1020, dense)
    assert mode == Mode.COMPRESSED and w == 8 and len(payload) < 100
    assert choose_mode(16, 16, "1" * 16)[0] == Mode.PLAIN
    sparse = random_bitmap(rng, 4096, 10)
    assert choose_mode(4096, 10, sparse)[0] in (Mode.LIST, Mode.COMPRESSED)
    with pytest.raises(ValueError):
        choose_mode(16, 3, "1" * 16)


def test_choose_mode_is_minimal():
    rng = random.Random(8)
    for _ in range(100):
        n = rng.choice([64, 256, 1024])
        m = rng.randint(1, n)
        bm = random_bitmap(rng, n, m)
        _, _, payload = choose_mode(n, m, bm)
        options = [n, m * list_width(n)]
        if m < n:
            options += [len(compressed_payload(bm, m, w)) for w in (4, 8)]
        assert len(payload) == min(options)


def test_compressed_size_at_ten_percent():
    rng = random.Random(1)
    for _ in range(20):
        payload = compressed_payload(random_bitmap(rng, 1024, 102), 102, 4)
        assert 482 <= len(payload) <= 560
        assert 95 <= (len(payload) + 320 + 7) // 8 <= 110


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_round_trip_property(data):
    n = data.draw(st.integers(1, 4096))
    m = data.draw(st.integers(0, min(n, 4095)))
    rng = random.Random(data.draw(st.integers(0, 2**32)))
    bm = random_bitmap(rng, n, m)
    extra = data.draw(st.integers(0, 31))
    if m == 0:
        rot = RootOfTrust(ROOT, n, 0, Mode.EMPTY, "", 4, extra)
    else:
        mode, w, payload = choose_mode(n, m, bm)
        if len(payload) > 1024:
            return
        rot = RootOfTrust(rng.randbytes(32), n, m, mode, payload, w, extra)
    encoded = encode_rot(rot)
    assert len(encoded) == (rot.payload_bits + 320 + 7) // 8
    back = decode_rot(encoded)
    assert back == rot
    assert back.bitmap == bm
    assert back.bit_length == HEADER_BITS + back.payload_bits + REDUNDANCY_BITS


def test_random_messages_rejected():
    rng = random.Random(12)
    accepted = 0
    for _ in range(20_000):
        try:
            decode_rot(rng.randbytes(rng.choice([48, 96, 128])))
            accepted += 1
        except RotError:
            pass
    assert accepted == 0


def test_search_clustered_bitmap():
    n, m = 1024, 102
    bm = "1" * m + "0" * (n - m)
    enc = search_extra_rounds(n, bm, 3, 200)
    unpermuted = len(compressed_payload(bm, m, 4))
    assert 1 <= enc.extra_rounds <= 31
    assert len(enc.payload) < unpermuted
    assert enc.bitmap.count("1") == m


def test_search_random_bitmap():
    rng = random.Random(5)
    bm = random_bitmap(rng, 1024, 102)
    enc = search_extra_rounds(1024, bm, 9, 200)
    assert len(enc.payload) <= len(choose_mode(1024, 102, bm)[2])


def test_search_ties_prefer_smallest_extra():
    enc = search_extra_rounds(16, "1" * 16, 0, 200)
    assert enc.extra_rounds == 0 and enc.mode == Mode.PLAIN
    enc = search_extra_rounds(12, "100000000001", 0, 200)
    assert enc.extra_rounds == 0


def test_codebook_width_flag_round_trip():
    rng = random.Random(3)
    bm = random_bitmap(rng, 1024, 40)
    for w in tunstall.WIDTHS:
        rot = RootOfTrust(ROOT, 1024, 40, Mode.COMPRESSED, compressed_payload(bm, 40, w), w)
        assert decode_rot(encode_rot(rot)).w == w
