"""Finite-field arithmetic, Reed-Solomon coding, message packing, and online
error correction.

Field elements live in GF(2^c) under fixed reduction polynomials (see
``GF.REDUCTION``).  Evaluation points for the (n, k) code are the generator's
power sequence g^1 .. g^n, so codewords are reproducible bit-exactly from
(n, k, c) alone.

A message is carried as ``lane_count`` independent (n, k) codes, one per c-bit
lane of the cb-bit symbol; coded symbol i concatenates the lane outputs at
evaluation point i.  cb = ceil(max(msg_bits, k*log2(n+1)) / k), where
``msg_bits`` is the wire width the code is configured for (16-bit length
prefix + maximum payload).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np


class CodingError(Exception):
    """Base class for coding-layer failures."""


class FieldError(CodingError):
    """Invalid field operation (e.g. inverting zero)."""


class ParamError(CodingError):
    """Ill-formed code parameters or call arguments."""


class MessageSizeError(CodingError):
    """Payload exceeds the configured maximum."""


class MessageFormatError(CodingError):
    """Packed wire bits do not parse back into a payload."""


class InsufficientSymbols(CodingError):
    """Fewer than k symbols available; decoding cannot even start."""


def _prime_factors(m: int) -> list[int]:
    out, d = [], 2
    while d * d <= m:
        if m % d == 0:
            out.append(d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        out.append(m)
    return out


class GF:
    """GF(2^c) arithmetic with log/exp tables; instances are cached per c."""

    REDUCTION = {
        3: 0b1011,                 # x^3 + x + 1
        4: 0b10011,                # x^4 + x + 1
        8: 0b100011101,            # x^8 + x^4 + x^3 + x^2 + 1
        16: 0b10001000000001011,   # x^16 + x^12 + x^3 + x + 1
    }

    _cache: dict[int, "GF"] = {}

    def __new__(cls, c: int) -> "GF":
        if c not in cls.REDUCTION:
            raise ParamError(f"unsupported field order exponent c={c}")
        if c not in cls._cache:
            inst = super().__new__(cls)
            inst._build(c)
            cls._cache[c] = inst
        return cls._cache[c]

    def _raw_mul(self, a: int, b: int) -> int:
        # carry-less multiply + modular reduction, used only to build tables
        poly, c = self.REDUCTION[self.c], self.c
        r = 0
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a <<= 1
            if a >> c:
                a ^= poly
        return r

    def _build(self, c: int) -> None:
        self.c = c
        self.order = 1 << c
        self.mask = self.order - 1
        group = self.order - 1
        gen = None
        for g in range(2, self.order):
            if all(self._pow_raw(g, group // p) != 1 for p in _prime_factors(group)):
                gen = g
                break
        assert gen is not None
        self.generator = gen
        exp = np.zeros(2 * group, dtype=np.int64)
        log = np.zeros(self.order, dtype=np.int64)
        x = 1
        for i in range(group):
            exp[i] = x
            log[x] = i
            x = self._raw_mul(x, gen)
        exp[group:] = exp[:group]
        self.exp = exp
        self.log = log
        # plain-list mirrors: scalar ops avoid numpy indexing overhead
        self.exp_l = exp.tolist()
        self.log_l = log.tolist()

    def _pow_raw(self, a: int, e: int) -> int:
        r = 1
        while e:
            if e & 1:
                r = self._raw_mul(r, a)
            a = self._raw_mul(a, a)
            e >>= 1
        return r

    def add(self, a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp_l[self.log_l[a] + self.log_l[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise FieldError("inverse of zero")
        return self.exp_l[self.order - 1 - self.log_l[a]]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self.exp_l[(self.log_l[a] * e) % (self.order - 1)]

    # vectorized helpers over numpy int arrays

    def mul_np(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = self.exp[self.log[a] + self.log[b]]
        return np.where((a == 0) | (b == 0), 0, out)

    def dot_np(self, rows: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """XOR-accumulated row-wise dot product: sum_j rows[:, j] * coeffs[j]."""
        prod = self.mul_np(rows, np.asarray(coeffs, dtype=np.int64)[None, :])
        return np.bitwise_xor.reduce(prod, axis=1)

    def poly_eval(self, coeffs: list[int], x: int) -> int:
        acc = 0
        for c_j in reversed(coeffs):
            acc = self.mul(acc, x) ^ c_j
        return acc

    def poly_eval_np(self, coeff_rows: np.ndarray, x: int) -> np.ndarray:
        """Evaluate per-lane polynomials (coeff_rows[j] = lane coefficients of x^j)."""
        acc = np.zeros(coeff_rows.shape[1], dtype=np.int64)
        for j in range(coeff_rows.shape[0] - 1, -1, -1):
            acc = self.mul_np(acc, np.int64(x)) ^ coeff_rows[j]
        return acc


@dataclass(frozen=True)
class CodeParams:
    """Parameters of one (n, k) interleaved-lane RS code instance."""

    n: int
    k: int
    t: int
    c: int
    msg_bits: int          # configured wire width (prefix + max payload bits)
    cb: int                # symbol bit-width
    lane_count: int
    eval_points: tuple[int, ...]

    # wire layout: 16-bit big-endian payload byte length, then payload bytes,
    # then zero padding; length 0xFFFF is the reserved default-value tag
    PREFIX_BITS = 16
    DEFAULT_TAG = 0xFFFF

    @classmethod
    def make(cls, n: int, t: int, *, k: int | None = None, c: int | None = None,
             msg_bits: int | None = None, max_payload: int | None = None) -> "CodeParams":
        """Build params; exactly one of msg_bits / max_payload must be given.

        ``max_payload`` is the maximum payload size in bytes; the 16-bit length
        prefix is added on top when deriving the wire width.
        """
        if k is None:
            k = t // 5 + 1
        if c is None:
            c = 8 if n <= 255 else 16
        if (msg_bits is None) == (max_payload is None):
            raise ParamError("give exactly one of msg_bits / max_payload")
        if msg_bits is None:
            msg_bits = cls.PREFIX_BITS + 8 * max_payload
        if n < 1 or k < 1 or msg_bits < 1:
            raise ParamError("n, k, msg_bits must all be >= 1")
        gf = GF(c)
        if n > gf.order - 1:
            raise ParamError(f"RS length constraint violated: n={n} > 2^{c}-1")
        cb = max(-(-msg_bits // k), n.bit_length())  # ceil(max(l, k*log2(n+1))/k)
        lane_count = -(-cb // c)
        points = tuple(int(gf.exp[i]) for i in range(1, n + 1))
        return cls(n=n, k=k, t=t, c=c, msg_bits=msg_bits, cb=cb,
                   lane_count=lane_count, eval_points=points)

    @property
    def gf(self) -> GF:
        return GF(self.c)

    @property
    def lane_bytes(self) -> int:
        return max(1, self.c // 8)

    @property
    def max_payload_bytes(self) -> int:
        return min((self.k * self.cb - self.PREFIX_BITS) // 8, 0xFFFE)

    def symbol(self, index: int, lanes) -> "CodedSymbol":
        vals = [int(v) for v in lanes]
        if len(vals) != self.lane_count:
            raise ParamError("wrong lane count for this code")
        w = self.lane_bytes
        return CodedSymbol(index, b"".join(v.to_bytes(w, "big") for v in vals))


@dataclass(frozen=True)
class CodedSymbol:
    """One RS-coded share: node index plus packed lane bytes."""

    index: int
    lanes: bytes

    def lane_values(self, params: CodeParams) -> np.ndarray:
        w = params.lane_bytes
        if len(self.lanes) != w * params.lane_count:
            raise ParamError("lane byte length mismatch")
        if w == 1:
            return np.frombuffer(self.lanes, dtype=np.uint8).astype(np.int64)
        return np.frombuffer(self.lanes, dtype=">u2").astype(np.int64)

    def to_bytes(self) -> bytes:
        """Serialize: index (2B BE) | lane_count (2B BE) | lane bytes.

        Lane width is c/8 bytes, rounded up to one byte for c < 8.
        """
        return struct.pack(">HH", self.index, len(self.lanes)) + self.lanes

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CodedSymbol":
        if len(raw) < 4:
            raise ParamError("short coded-symbol serialization")
        index, nbytes = struct.unpack(">HH", raw[:4])
        if len(raw) != 4 + nbytes:
            raise ParamError("coded-symbol length mismatch")
        return cls(index, raw[4:])

    def valid_for(self, params: CodeParams, index: int) -> bool:
        return (self.index == index
                and len(self.lanes) == params.lane_bytes * params.lane_count)


NOT_YET = object()  # online-error-correction "keep waiting" sentinel


def pack_message(params: CodeParams, payload: Optional[bytes]) -> np.ndarray:
    """Pack a payload (or None for the default value) into k data symbols.

    Returns a (k, lane_count) array of field elements.  The wire stream is
    length prefix + payload + zero padding, split into k slices of cb bits,
    each slice chunked into c-bit lane elements.
    """
    if params.k * params.cb < params.PREFIX_BITS:
        raise MessageSizeError("code too narrow to carry the length prefix")
    if payload is None:
        wire_int = params.DEFAULT_TAG << (params.k * params.cb - params.PREFIX_BITS)
    else:
        if len(payload) == 0:
            raise MessageSizeError("empty payload; use None for the default value")
        if len(payload) > params.max_payload_bytes:
            raise MessageSizeError(
                f"payload {len(payload)}B exceeds configured max {params.max_payload_bytes}B")
        body = struct.pack(">H", len(payload)) + payload
        wire_int = int.from_bytes(body, "big") << (params.k * params.cb - 8 * len(body))
    data = np.zeros((params.k, params.lane_count), dtype=np.int64)
    cb, c, L = params.cb, params.c, params.lane_count
    for j in range(params.k):
        shift = (params.k - 1 - j) * cb
        sym_bits = (wire_int >> shift) & ((1 << cb) - 1)
        pad = L * c - cb
        sym_bits <<= pad
        for m in range(L - 1, -1, -1):
            data[j, m] = sym_bits & ((1 << c) - 1)
            sym_bits >>= c
    return data


def unpack_message(params: CodeParams, data: np.ndarray) -> Optional[bytes]:
    """Exact inverse of pack_message; raises MessageFormatError on garbage."""
    cb, c, L = params.cb, params.c, params.lane_count
    wire_int = 0
    for j in range(params.k):
        sym_bits = 0
        for m in range(L):
            sym_bits = (sym_bits << c) | int(data[j, m])
        sym_bits >>= L * c - cb
        wire_int = (wire_int << cb) | sym_bits
    total = params.k * cb
    prefix = wire_int >> (total - params.PREFIX_BITS)
    rest_mask = (1 << (total - params.PREFIX_BITS)) - 1
    if prefix == params.DEFAULT_TAG:
        if wire_int & rest_mask:
            raise MessageFormatError("nonzero bits after default-value tag")
        return None
    nbytes = prefix
    if nbytes == 0 or params.PREFIX_BITS + 8 * nbytes > total:
        raise MessageFormatError(f"invalid length prefix {nbytes}")
    body_shift = total - params.PREFIX_BITS - 8 * nbytes
    if wire_int & ((1 << body_shift) - 1):
        raise MessageFormatError("nonzero padding bits")
    payload = (wire_int >> body_shift) & ((1 << (8 * nbytes)) - 1)
    return payload.to_bytes(nbytes, "big")


def rs_encode(params: CodeParams, data: np.ndarray) -> list[CodedSymbol]:
    """Evaluate the degree-<k lane polynomials at all n points."""
    data = np.asarray(data, dtype=np.int64)
    if data.shape != (params.k, params.lane_count):
        raise ParamError(f"data must be shaped ({params.k}, {params.lane_count})")
    gf = params.gf
    out = []
    for i, alpha in enumerate(params.eval_points, start=1):
        lane_vals = gf.poly_eval_np(data, alpha)
        out.append(params.symbol(i, lane_vals))
    return out


def encode_message(params: CodeParams, payload: Optional[bytes]) -> list[CodedSymbol]:
    return rs_encode(params, pack_message(params, payload))


def _gauss_solve(gf: GF, rows: list[list[int]], rhs: list[int]) -> Optional[list[int]]:
    """Solve rows * x = rhs over GF; free variables are set to zero.

    Returns None when the system is inconsistent.
    """
    exp_l, log_l, group = gf.exp_l, gf.log_l, gf.order - 1
    m = len(rows)
    ncols = len(rows[0]) if m else 0
    aug = [list(r) + [v] for r, v in zip(rows, rhs)]
    pivot_cols: list[int] = []
    r = 0
    for col in range(ncols):
        sel = next((i for i in range(r, m) if aug[i][col]), None)
        if sel is None:
            continue
        aug[r], aug[sel] = aug[sel], aug[r]
        row_r = aug[r]
        log_inv = group - log_l[row_r[col]]
        aug[r] = row_r = [exp_l[log_l[v] + log_inv] if v else 0 for v in row_r]
        for i in range(m):
            if i != r and aug[i][col]:
                log_f = log_l[aug[i][col]]
                row_i = aug[i]
                aug[i] = [a ^ exp_l[log_f + log_l[b]] if b else a
                          for a, b in zip(row_i, row_r)]
        pivot_cols.append(col)
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if aug[i][ncols]:
            return None
    x = [0] * ncols
    for i, col in enumerate(pivot_cols):
        x[col] = aug[i][ncols]
    return x


def _poly_divmod(gf: GF, num: list[int], den: list[int]) -> tuple[list[int], list[int]]:
    num = list(num)
    dd = len(den) - 1
    while dd >= 0 and den[dd] == 0:
        dd -= 1
    if dd < 0:
        raise FieldError("division by zero polynomial")
    quot = [0] * max(1, len(num) - dd)
    inv_lead = gf.inv(den[dd])
    for i in range(len(num) - 1, dd - 1, -1):
        coef = gf.mul(num[i], inv_lead)
        quot[i - dd] = coef
        if coef:
            for j in range(dd + 1):
                num[i - dd + j] ^= gf.mul(coef, den[j])
    return quot, num[:dd] if dd > 0 else [0]


def _bw_solve(gf: GF, xs: list[int], ys: list[int], e: int, k: int) -> Optional[tuple[list[int], list[int]]]:
    """Berlekamp-Welch via Gaussian elimination.

    Finds Q (deg < e+k) and monic E (deg e) with Q(x_i) = y_i * E(x_i); returns
    (message coefficients, E coefficients) or None.
    """
    nq = e + k
    rows, rhs = [], []
    for x, y in zip(xs, ys):
        xp = [1] * max(nq, e)
        for j in range(1, max(nq, e)):
            xp[j] = gf.mul(xp[j - 1], x)
        row = xp[:nq] + [gf.mul(y, xp[j]) for j in range(e)]
        rows.append(row)
        rhs.append(gf.mul(y, gf.pow(x, e)))
    sol = _gauss_solve(gf, rows, rhs)
    if sol is None:
        return None
    q = sol[:nq]
    epoly = sol[nq:] + [1]
    p, rem = _poly_divmod(gf, q, epoly)
    if any(rem):
        return None
    return (p + [0] * k)[:k], epoly


def _interpolate(gf: GF, xs: list[int], values: np.ndarray) -> Optional[np.ndarray]:
    """Solve the k x k Vandermonde system for every lane column at once."""
    k = len(xs)
    rows = [[gf.pow(x, j) for j in range(k)] for x in xs]
    # invert via solving against identity
    inv_cols = []
    for b in range(k):
        rhs = [1 if i == b else 0 for i in range(k)]
        col = _gauss_solve(gf, [list(r) for r in rows], rhs)
        if col is None:
            return None
        inv_cols.append(col)
    coeffs = np.zeros((k, values.shape[1]), dtype=np.int64)
    for j in range(k):
        acc = np.zeros(values.shape[1], dtype=np.int64)
        for r in range(k):
            acc ^= gf.mul_np(np.int64(inv_cols[r][j]), values[r])
        coeffs[j] = acc
    return coeffs


def _reencode_rows(gf: GF, coeffs: np.ndarray, xs: list[int]) -> np.ndarray:
    return np.stack([gf.poly_eval_np(coeffs, x) for x in xs])


def _decode_single_lane(params: CodeParams, gf: GF, xs: list[int],
                        vals: list[int], e: int, max_errors: int) -> Optional[np.ndarray]:
    k = params.k
    if e == 0:
        rows = [[gf.pow(x, j) for j in range(k)] for x in xs[:k]]
        sol = _gauss_solve(gf, rows, vals[:k])
        coeffs = sol
    else:
        got = _bw_solve(gf, xs, vals, e, k)
        coeffs = got[0] if got is not None else None
    if coeffs is None:
        return None
    mism = sum(1 for x, v in zip(xs, vals) if gf.poly_eval(coeffs, x) != v)
    if mism > max_errors:
        return None
    return np.array([[c] for c in coeffs], dtype=np.int64)


def rs_decode(params: CodeParams, received: dict[int, CodedSymbol],
              max_errors: int) -> Optional[np.ndarray]:
    """Decode k data symbols from received shares, correcting up to max_errors.

    Returns None (decode failure) when no candidate re-encodes to within
    max_errors mismatches of the received shares; raises InsufficientSymbols
    when fewer than k shares are given.  Guaranteed to return the original
    data when at most e <= max_errors shares are corrupted and 2e + k <= n'.
    """
    n_prime = len(received)
    if n_prime < params.k:
        raise InsufficientSymbols(f"{n_prime} < k={params.k}")
    gf = params.gf
    ids = sorted(received)
    xs = [params.eval_points[i - 1] for i in ids]
    e = max(0, min(max_errors, (n_prime - params.k) // 2))
    if params.lane_count == 1:
        flat = [int.from_bytes(received[i].lanes, "big") for i in ids]
        return _decode_single_lane(params, gf, xs, flat, e, max_errors)
    vals = np.stack([received[i].lane_values(params) for i in ids])

    def verify(coeffs: np.ndarray) -> Optional[np.ndarray]:
        re_rows = _reencode_rows(gf, coeffs, xs)
        mism = int(np.count_nonzero(np.any(re_rows != vals, axis=1)))
        return coeffs if mism <= max_errors else None

    if e == 0:
        coeffs = _interpolate(gf, xs[:params.k], vals[:params.k])
        return verify(coeffs) if coeffs is not None else None

    L = params.lane_count
    if L > 1:
        # fast path: locate errors on a random lane mix, then re-interpolate
        for attempt in range(4):
            gamma = np.array(
                [int(gf.exp[(attempt * 131 + 7 * m + 1) % (gf.order - 1)]) for m in range(L)],
                dtype=np.int64)
            mix = [int(v) for v in gf.dot_np(vals, gamma)]
            sol = _bw_solve(gf, xs, mix, e, params.k)
            if sol is None:
                continue
            _, epoly = sol
            clean = [r for r in range(n_prime) if gf.poly_eval(epoly, xs[r]) != 0]
            if len(clean) < params.k:
                continue
            pick = clean[:params.k]
            coeffs = _interpolate(gf, [xs[r] for r in pick], vals[pick])
            if coeffs is None:
                continue
            got = verify(coeffs)
            if got is not None:
                return got
    # exact path: independent Berlekamp-Welch per lane
    coeffs = np.zeros((params.k, L), dtype=np.int64)
    for m in range(L):
        sol = _bw_solve(gf, xs, [int(v) for v in vals[:, m]], e, params.k)
        if sol is None:
            return None
        coeffs[:, m] = sol[0]
    return verify(coeffs)


def oec_try_decode(params: CodeParams, received: dict[int, CodedSymbol],
                   *, require_nonempty: bool = False):
    """One online-error-correction trial over the symbols gathered so far.

    Returns NOT_YET until a decode both succeeds and re-encodes to a codeword
    matching at least k + t received entries; then returns the payload bytes
    (or None for the default value, unless require_nonempty is set).
    """
    if len(received) < params.k + params.t:
        return NOT_YET
    e = (len(received) - params.k) // 2
    data = rs_decode(params, received, max_errors=e)
    if data is None:
        return NOT_YET
    full = rs_encode(params, data)
    matches = sum(1 for i, sym in received.items() if full[i - 1] == sym)
    if matches < params.k + params.t:
        return NOT_YET
    try:
        payload = unpack_message(params, data)
    except MessageFormatError:
        return NOT_YET
    if require_nonempty and payload is None:
        return NOT_YET
    return payload
