"""Reed-Solomon encode/decode against a brute-force nearest-codeword oracle."""

import itertools
import json
import os

import numpy as np
import pytest

from codedbft.coding import (CodeParams, CodedSymbol, InsufficientSymbols,
                             rs_decode, rs_encode)


def raw_params(n: int, k: int, c: int) -> CodeParams:
    """Single-lane code for raw symbol tests (cb = c)."""
    p = CodeParams.make(n, t=max(1, (n - 1) // 3), k=k, c=c, msg_bits=c * k)
    assert p.lane_count == 1, "raw tests assume one lane"
    return p


def all_codewords(p: CodeParams) -> np.ndarray:
    """(q^k, n) table of every codeword, one lane."""
    gf = p.gf
    q = gf.order
    datas = np.array(list(itertools.product(range(q), repeat=p.k)), dtype=np.int64)
    acc = np.zeros((len(datas), p.n), dtype=np.int64)
    alphas = np.array(p.eval_points, dtype=np.int64)
    for j in range(p.k - 1, -1, -1):
        acc = gf.mul_np(acc, alphas[None, :]) ^ datas[:, j][:, None]
    return acc


def oracle_nearest(table: np.ndarray, cols: list[int], received: np.ndarray):
    """Nearest codeword restricted to the given symbol positions; returns
    (data_index, distance, unique)."""
    dists = np.count_nonzero(table[:, cols] != received[None, :], axis=1)
    idx = int(np.argmin(dists))
    d = int(dists[idx])
    unique = int(np.count_nonzero(dists == d)) == 1
    return idx, d, unique


def to_symbols(p: CodeParams, vec, ids) -> dict[int, CodedSymbol]:
    return {i: p.symbol(i, [int(v)]) for i, v in zip(ids, vec)}


def decode_lane(p: CodeParams, received: dict[int, CodedSymbol], e: int):
    data = rs_decode(p, received, max_errors=e)
    return None if data is None else tuple(int(x) for x in data[:, 0])


def test_degree_zero_codeword_constant():
    p = raw_params(5, 1, 4)
    cw = rs_encode(p, np.array([[9]]))
    assert len({s.lanes for s in cw}) == 1


def test_noiseless_round_trip():
    p = raw_params(7, 2, 3)
    data = np.array([[1], [2]])
    cw = rs_encode(p, data)
    out = rs_decode(p, {s.index: s for s in cw}, max_errors=0)
    assert out is not None and np.array_equal(out, data)


def test_two_error_correction_exhaustive_gf8():
    # (7,2) over GF(2^3): any 2 corruptions correctable since 2*2+2 <= 7
    p = raw_params(7, 2, 3)
    data = np.array([[1], [2]])
    cw = [int(s.lane_values(p)[0]) for s in rs_encode(p, data)]
    for pos in itertools.combinations(range(7), 2):
        for e1 in range(1, 8):
            for e2 in range(1, 8):
                vec = list(cw)
                vec[pos[0]] ^= e1
                vec[pos[1]] ^= e2
                got = decode_lane(p, to_symbols(p, vec, range(1, 8)), 2)
                assert got == (1, 2), (pos, e1, e2, got)


def test_three_errors_detected_gf8():
    # 2*3+2 > 7: correction impossible, and with minimum distance 6 no other
    # codeword is within 2 either, so the decoder must report failure
    p = raw_params(7, 2, 3)
    data = np.array([[3], [5]])
    cw = [int(s.lane_values(p)[0]) for s in rs_encode(p, data)]
    table = all_codewords(p)
    for pos in itertools.combinations(range(7), 3):
        for errs in itertools.product((1, 5), repeat=3):
            vec = list(cw)
            for pp, ee in zip(pos, errs):
                vec[pp] ^= ee
            _, d, _ = oracle_nearest(table, list(range(7)), np.array(vec))
            assert d == 3
            assert decode_lane(p, to_symbols(p, vec, range(1, 8)), 2) is None


def test_subset_decode_with_one_error():
    # n'=5 of 7 symbols, one corrupted: 2*1+2 <= 5
    p = raw_params(7, 2, 3)
    data = np.array([[6], [1]])
    cw = [int(s.lane_values(p)[0]) for s in rs_encode(p, data)]
    for subset in itertools.combinations(range(7), 5):
        for hit in range(5):
            for val in range(1, 8):
                vec = [cw[i] for i in subset]
                vec[hit] ^= val
                ids = [i + 1 for i in subset]
                got = decode_lane(p, to_symbols(p, vec, ids), 1)
                assert got == (6, 1), (subset, hit, val)


def test_insufficient_symbols_raises():
    p = raw_params(7, 2, 3)
    with pytest.raises(InsufficientSymbols):
        rs_decode(p, {1: p.symbol(1, [3])}, max_errors=0)


def test_detection_contract_on_success():
    # whenever decode returns, the re-encoding matches >= n' - max_errors spots
    import random
    rng = random.Random(3)
    p = CodeParams.make(9, 2, k=3, c=4, msg_bits=12)
    data = np.array([[1], [7], [4]])
    cw = rs_encode(p, data)
    for _ in range(300):
        received = {s.index: s for s in cw}
        for idx in rng.sample(range(1, 10), rng.randrange(0, 5)):
            received[idx] = p.symbol(idx, [rng.randrange(16)])
        out = rs_decode(p, received, max_errors=3)
        if out is None:
            continue
        re = rs_encode(p, out)
        mismatch = sum(1 for i, s in received.items() if re[i - 1] != s)
        assert mismatch <= 3


def test_multilane_corruption_recovery():
    import random
    rng = random.Random(11)
    p = CodeParams.make(16, 5, max_payload=125)
    from codedbft.coding import pack_message
    w = rng.randbytes(125)
    data = pack_message(p, w)
    cw = rs_encode(p, data)
    received = {s.index: s for s in cw}
    for idx in rng.sample(range(1, 17), 5):
        received[idx] = CodedSymbol(idx, rng.randbytes(len(received[idx].lanes)))
    out = rs_decode(p, received, max_errors=5)
    assert out is not None and np.array_equal(out, data)


def test_randomized_large_n():
    # n = 31 randomized corruption sweeps at full resilience
    import random
    rng = random.Random(31)
    p = CodeParams.make(31, 10, max_payload=64)
    from codedbft.coding import pack_message
    for trial in range(10):
        w = rng.randbytes(64)
        data = pack_message(p, w)
        cw = rs_encode(p, data)
        received = {s.index: s for s in cw}
        e = rng.randrange(0, 11)
        for idx in rng.sample(range(1, 32), e):
            received[idx] = CodedSymbol(idx, rng.randbytes(len(received[idx].lanes)))
        out = rs_decode(p, received, max_errors=10)
        assert out is not None and np.array_equal(out, data), (trial, e)


def test_golden_vectors():
    path = os.path.join(os.path.dirname(__file__), "..", "golden", "rs_vectors.json")
    with open(path) as fh:
        vectors = json.load(fh)
    assert vectors, "golden vector file is empty"
    for vec in vectors:
        p = CodeParams.make(vec["n"], vec["t"], k=vec["k"], c=vec["c"],
                            msg_bits=vec["msg_bits"])
        data = np.array(vec["data"], dtype=np.int64)
        cw = rs_encode(p, data)
        assert [s.to_bytes().hex() for s in cw] == vec["codeword"]
        received = {s.index: s for s in cw}
        for pos, hexsym in vec["corrupt"].items():
            received[int(pos)] = CodedSymbol.from_bytes(bytes.fromhex(hexsym))
        out = rs_decode(p, received, max_errors=vec["max_errors"])
        assert out is not None and out.tolist() == vec["data"]
