"""The CSR-dtANS container: compressed matrices and SpMVM fused with decode.

A matrix is cut into slices of 32 consecutive rows, one lane per row.  Every
row's interleaved delta/value symbol stream is dtANS-encoded on its own, then
the 32 per-lane word streams of a slice are merged in lockstep order: at each
synchronized load point the active lanes take consecutive positions in
ascending lane order, which is the coalescing contract a warp needs.

Decoding replays the same lockstep schedule.  The engine here simulates all
lanes of a range of slices simultaneously with numpy (one array element per
row), which keeps the per-segment loop structure of the kernel while staying
fast enough on CPU.  SpMVM accumulates value * x[col] strictly left to right
per row, bit-identical to the sequential reference.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codec import (
    DecodeTrace,
    DtansParams,
    WordStream,
    dtans_decode,
    dtans_encode,
)
from .entropy import (
    ESCAPE,
    CodingTables,
    CorruptStream,
    ParameterError,
    SymbolDistribution,
    build_tables,
    quantize,
)
from .sparse import CsrMatrix, matrix_deltas, value_patterns

MAGIC = b"CDTA"
FORMAT_VERSION = 1
SLICE_HEIGHT = 32
DEFAULT_PERMUTATION_SEED = 2654435761

# Bit patterns marking escape slots in serialized tables.  The quantizer
# never retains them, so a slot carrying one is unambiguous.
DELTA_SENTINEL = 0xFFFFFFFF
VALUE_SENTINEL = {4: 0xFFFFFFFF, 8: 0xFFFFFFFFFFFFFFFF}

_HEADER = struct.Struct("<4sHBBQQQ")
_PARAMS = struct.Struct("<BBBBBBQ")


@dataclass
class CsrDtansContainer:
    rows: int
    cols: int
    nnz: int
    precision: int  # value width in bytes: 4 or 8
    params: DtansParams
    permutation_seed: int
    delta_tables: CodingTables
    value_tables: CodingTables
    row_symbols: np.ndarray  # uint32, symbols per row (2 * nnz of the row)
    directory: np.ndarray  # uint64, per-slice word offsets (nslices + 1)
    stream: np.ndarray  # uint32 interleaved words
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nslices(self) -> int:
        return -(-self.rows // SLICE_HEIGHT)

    @property
    def value_dtype(self):
        return np.float64 if self.precision == 8 else np.float32

    def raw_widths(self) -> tuple:
        return (32, self.precision * 8)

    def tables_pair(self) -> tuple:
        return (self.delta_tables, self.value_tables)


class ContainerError(ValueError):
    """Malformed container bytes."""


# ---------------------------------------------------------------------------
# Encoding


def _require_container_params(p: DtansParams, precision: int) -> None:
    p.validate()
    if p.k**p.l != p.w**p.o:
        raise ParameterError("container params must satisfy k^l == w^o")
    if p.w != 2**32:
        raise ParameterError("container streams are 4-byte words; w must be 2^32")
    if p.m > 256:
        raise ParameterError("slot records store base - 1 in one byte; m <= 256")
    if p.l % 2 != 0:
        raise ParameterError("l must be even: segments interleave deltas and values")
    group = -(-p.l // p.f)
    if group * p.m_log2 > p.w_log2:
        raise ParameterError("check groups too long for 64-bit state arithmetic")
    if precision not in (4, 8):
        raise ParameterError("precision must be 4 or 8 bytes")


def _distribution_from_array(arr: np.ndarray) -> SymbolDistribution:
    uniq, counts = np.unique(arr, return_counts=True)
    return SymbolDistribution(tuple(uniq.tolist()), tuple(counts.tolist()))


def row_symbol_list(deltas, patterns, lo: int, hi: int) -> list:
    """Interleaved (delta, value, delta, value, ...) symbols of one row."""
    out = []
    for p in range(lo, hi):
        out.append(deltas[p])
        out.append(patterns[p])
    return out


def encode_matrix(
    m: CsrMatrix,
    params: DtansParams | None = None,
    value_width: int | None = None,
    permutation_seed: int | None = DEFAULT_PERMUTATION_SEED,
) -> CsrDtansContainer:
    """Compress ``m`` into a container.

    Distributions are gathered over the whole matrix, quantized per domain,
    and every row is encoded against the shared tables; slices of 32 rows are
    interleaved in warp-lockstep order.  ``permutation_seed`` shuffles table
    slots (None keeps the canonical layout); the result is deterministic for
    a fixed input and seed.
    """
    m.validate()
    params = params or DtansParams.production()
    precision = value_width if value_width is not None else m.value_width
    _require_container_params(params, precision)
    if m.cols > 2**32 or m.rows > 2**32:
        raise ParameterError("indices must fit 32 bits")

    values = m.values.astype(np.float64 if precision == 8 else np.float32,
                             copy=False)
    deltas = matrix_deltas(m)
    patterns = value_patterns(values)
    delta_dist = _distribution_from_array(deltas)
    value_dist = _distribution_from_array(patterns)
    value_sentinel = VALUE_SENTINEL[precision]

    q_delta = quantize(delta_dist, params.k, params.m, 32,
                       never_retain=frozenset({DELTA_SENTINEL}))
    q_value = quantize(value_dist, params.k, params.m, precision * 8,
                       never_retain=frozenset({value_sentinel}))
    if permutation_seed is None:
        perm_d = perm_v = None
    else:
        rng = np.random.default_rng(permutation_seed)
        perm_d = rng.permutation(params.k).tolist()
        perm_v = rng.permutation(params.k).tolist()
    delta_tables = build_tables(q_delta, perm_d)
    value_tables = build_tables(q_value, perm_v)

    tables = (delta_tables, value_tables)
    raw_widths = (32, precision * 8)
    delta_list = deltas.tolist()
    pattern_list = patterns.tolist()

    row_symbols = np.zeros(m.rows, dtype=np.uint32)
    directory = np.zeros(-(-m.rows // SLICE_HEIGHT) + 1, dtype=np.uint64)
    out_words: list = []
    for s in range(-(-m.rows // SLICE_HEIGHT)):
        lo_row = s * SLICE_HEIGHT
        hi_row = min(lo_row + SLICE_HEIGHT, m.rows)
        streams, traces = [], []
        for i in range(lo_row, hi_row):
            u = row_symbol_list(delta_list, pattern_list,
                                int(m.row_start[i]), int(m.row_start[i + 1]))
            row_symbols[i] = len(u)
            v, trace = dtans_encode(u, tables, params, raw_widths)
            streams.append(v)
            traces.append(trace)
        words, schedule = interleave_warp(streams, traces, params)
        schedule.check_coalescing()
        out_words.extend(words)
        directory[s + 1] = len(out_words)

    return CsrDtansContainer(
        rows=m.rows,
        cols=m.cols,
        nnz=m.nnz,
        precision=precision,
        params=params,
        permutation_seed=0 if permutation_seed is None else permutation_seed,
        delta_tables=delta_tables,
        value_tables=value_tables,
        row_symbols=row_symbols,
        directory=directory,
        stream=np.array(out_words, dtype=np.uint32),
    )


# ---------------------------------------------------------------------------
# Warp-lockstep interleaving


@dataclass(frozen=True)
class LoadEvent:
    """One synchronized load point: which lanes consume how many words where."""

    kind: str  # "init" | "payload" | "check" | "uncond"
    segment: int
    position: int  # word index within init loads / check index / uncond index
    lanes: tuple
    counts: tuple
    offsets: tuple  # start offset of each lane's words in the merged stream

    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class LockstepSchedule:
    events: tuple

    def total_words(self) -> int:
        return sum(e.total() for e in self.events)

    def check_coalescing(self) -> None:
        """Active lanes must take consecutive positions in ascending lane order."""
        for e in self.events:
            if list(e.lanes) != sorted(e.lanes):
                raise AssertionError(f"lanes out of order in {e}")
            pos = e.offsets[0] if e.offsets else 0
            for lane_off, cnt in zip(e.offsets, e.counts):
                if lane_off != pos:
                    raise AssertionError(f"non-consecutive positions in {e}")
                pos += cnt

    def lane_positions(self, lane: int) -> list:
        """Stream positions consumed by one lane, in its consumption order."""
        out = []
        for e in self.events:
            for ln, cnt, off in zip(e.lanes, e.counts, e.offsets):
                if ln == lane:
                    out.extend(range(off, off + cnt))
        return out


def _event_grid(traces: Sequence[DecodeTrace], p: DtansParams):
    """Yield (kind, segment, position, per-lane word counts) in stream order."""
    nlanes = len(traces)
    max_nseg = max((len(t.segments) for t in traces), default=0)
    counts = [0] * nlanes

    def lane_counts(fn):
        return [fn(t) for t in traces]

    for c in range(p.o):
        yield "init", -1, c, lane_counts(lambda t: 1 if t.init_words else 0)
    for j in range(max_nseg):
        def seg(t):
            return t.segments[j] if j < len(t.segments) else None

        yield "payload", j, 0, lane_counts(
            lambda t: seg(t).payload_words if seg(t) else 0
        )
        for c in range(p.f):
            yield "check", j, c, lane_counts(
                lambda t: 1 if seg(t) and seg(t).checks is not None
                and seg(t).checks[c] else 0
            )
        for c in range(p.o - p.f):
            yield "uncond", j, c, lane_counts(
                lambda t: 1 if seg(t) and seg(t).checks is not None else 0
            )


def interleave_warp(
    streams: Sequence[WordStream],
    traces: Sequence[DecodeTrace],
    p: DtansParams,
):
    """Merge per-lane streams in lockstep order; returns (words, schedule)."""
    if len(streams) != len(traces):
        raise ParameterError("streams and traces must align")
    if len(streams) > SLICE_HEIGHT:
        raise ParameterError(f"at most {SLICE_HEIGHT} lanes per slice")
    cursors = [0] * len(streams)
    merged: list = []
    events = []
    for kind, j, c, lane_counts in _event_grid(traces, p):
        lanes, cnts, offs = [], [], []
        for lane, cnt in enumerate(lane_counts):
            if cnt == 0:
                continue
            lanes.append(lane)
            cnts.append(cnt)
            offs.append(len(merged))
            lo = cursors[lane]
            merged.extend(streams[lane].words[lo : lo + cnt])
            cursors[lane] += cnt
        if lanes:
            events.append(
                LoadEvent(kind, j, c, tuple(lanes), tuple(cnts), tuple(offs))
            )
    for lane, stream in enumerate(streams):
        if cursors[lane] != len(stream.words):
            raise ParameterError(
                f"lane {lane}: trace consumed {cursors[lane]} of "
                f"{len(stream.words)} words"
            )
    return merged, LockstepSchedule(tuple(events))


def deinterleave_warp(
    words: Sequence[int],
    traces: Sequence[DecodeTrace],
    p: DtansParams,
) -> list:
    """Invert :func:`interleave_warp` given the same traces."""
    out = [[] for _ in traces]
    pos = 0
    for _, _, _, lane_counts in _event_grid(traces, p):
        for lane, cnt in enumerate(lane_counts):
            if cnt:
                out[lane].extend(words[pos : pos + cnt])
                pos += cnt
    if pos != len(words):
        raise ParameterError("words left over after deinterleaving")
    return [WordStream(w) for w in out]


# ---------------------------------------------------------------------------
# Vectorized lockstep decode

_U64 = np.uint64


def _table_arrays(tables: CodingTables):
    k = tables.k
    sym = np.zeros(k, dtype=np.uint64)
    digit = np.zeros(k, dtype=np.uint64)
    bm1 = np.zeros(k, dtype=np.uint64)
    esc = np.zeros(k, dtype=bool)
    for j in range(k):
        s = tables.symbols[j]
        if s is ESCAPE:
            esc[j] = True
        else:
            sym[j] = s
        digit[j] = tables.digits[j]
        bm1[j] = tables.bases[j] - 1
    return {"sym": sym, "digit": digit, "bm1": bm1, "esc": esc}


def _decode_arrays(c: CsrDtansContainer):
    if "decode" not in c._cache:
        c._cache["decode"] = {
            "stream": c.stream.astype(np.uint64),
            "domains": (_table_arrays(c.delta_tables), _table_arrays(c.value_tables)),
        }
    return c._cache["decode"]


def _decode_slice_range(c: CsrDtansContainer, slice_lo: int, slice_hi: int):
    """Decode rows of slices [slice_lo, slice_hi) -> (nnz_row, cols, values).

    Simulates all lanes of the range simultaneously: one numpy element per
    row, marching the shared segment loop with per-slice stream cursors.
    """
    p = c.params
    arrays = _decode_arrays(c)
    stream = arrays["stream"]
    domains = arrays["domains"]
    w_log2 = p.w_log2
    wmask = _U64(p.w - 1)
    wval = _U64(p.w)
    kmask = _U64(p.k - 1)
    klog = p.k_log2
    pw = (-(-32 // w_log2), -(-(c.precision * 8) // w_log2))

    row_lo = slice_lo * SLICE_HEIGHT
    row_hi = min(slice_hi * SLICE_HEIGHT, c.rows)
    nrows = row_hi - row_lo
    if nrows <= 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=c.value_dtype)

    n_row = c.row_symbols[row_lo:row_hi].astype(np.int64)
    nseg = -(-n_row // p.l)
    pad_len = nseg * p.l
    pad_off = np.concatenate([[0], np.cumsum(pad_len)])[:-1]
    total_pad = int(pad_len.sum())
    sym_out = np.zeros(total_pad, dtype=np.uint64)

    slice_of_row = np.arange(nrows, dtype=np.int64) // SLICE_HEIGHT
    slice_starts = np.arange(0, nrows, SLICE_HEIGHT)
    cur = c.directory[slice_lo:slice_hi].astype(np.int64)
    expected_end = c.directory[slice_lo + 1 : slice_hi + 1].astype(np.int64)

    def consume(cnt):
        nonlocal cur
        csum = np.cumsum(cnt)
        excl = csum - cnt
        base = excl[slice_starts]
        pos = cur[slice_of_row] + (excl - base[slice_of_row])
        cur = cur + np.add.reduceat(cnt, slice_starts)
        return pos

    def fetch(pos, mask):
        idx = pos[mask]
        if idx.size and (idx.min() < 0 or idx.max() >= len(stream)):
            raise CorruptStream("stream access out of bounds")
        return stream[idx]

    d = np.zeros(nrows, dtype=np.uint64)
    r = np.ones(nrows, dtype=np.uint64)
    w = np.zeros((p.o, nrows), dtype=np.uint64)
    groups = p.check_groups()

    active0 = nseg > 0
    for cpos in range(p.o):
        pos = consume(np.where(active0, 1, 0))
        w[cpos][active0] = fetch(pos, active0)

    max_nseg = int(nseg.max()) if nrows else 0
    for j in range(max_nseg):
        act = nseg > j
        notlast = nseg > j + 1

        # unpack: re-digit the o words as l slot indices, low slots first
        slots = []
        buf = np.zeros(nrows, dtype=np.uint64)
        nbits = 0
        for wi in range(p.o - 1, -1, -1):
            buf = buf | (w[wi] << _U64(nbits))
            nbits += w_log2
            while nbits >= klog and len(slots) < p.l:
                slots.append(buf & kmask)
                buf = buf >> _U64(klog)
                nbits -= klog

        doms = [(j * p.l + k) % 2 for k in range(p.l)]
        sym_k, esc_k = [], []
        payload_cnt = np.zeros(nrows, dtype=np.int64)
        for k in range(p.l):
            tab = domains[doms[k]]
            idx = slots[k]
            sym_k.append(tab["sym"][idx])
            ek = tab["esc"][idx] & act
            esc_k.append(ek)
            payload_cnt += ek * pw[doms[k]]

        run = consume(payload_cnt)
        for k in range(p.l):
            ek = esc_k[k]
            nw = pw[doms[k]]
            if ek.any():
                val = np.zeros(nrows, dtype=np.uint64)
                for i in range(nw):
                    val[ek] |= fetch(run + i, ek) << _U64(w_log2 * i)
                sk = sym_k[k].copy()
                sk[ek] = val[ek]
                sym_k[k] = sk
            run = run + ek * nw

        base_idx = pad_off + j * p.l
        for k in range(p.l):
            sym_out[base_idx[act] + k] = sym_k[k][act]

        if j == max_nseg - 1 and not notlast.any():
            break
        for cidx, group in enumerate(groups):
            for k in group:
                tab = domains[doms[k]]
                idx = slots[k]
                dig = tab["digit"][idx]
                bm1 = tab["bm1"][idx]
                d = np.where(notlast, d * bm1 + d + dig, d)
                r = np.where(notlast, r * bm1 + r, r)
            ge = r >= wval
            ext = notlast & ge
            ld = notlast & ~ge
            wc = np.where(ext, d & wmask, w[cidx])
            d = np.where(ext, d >> _U64(w_log2), d)
            r = np.where(ext, r >> _U64(w_log2), r)
            pos = consume(np.where(ld, 1, 0))
            wc[ld] = fetch(pos, ld)
            w[cidx] = wc
        for cidx in range(p.f, p.o):
            pos = consume(np.where(notlast, 1, 0))
            w[cidx][notlast] = fetch(pos, notlast)

    if not np.array_equal(cur, expected_end):
        raise CorruptStream("slice consumed an unexpected number of words")

    # Split the padded symbol grid into per-row deltas and value patterns.
    row_of = np.repeat(np.arange(nrows), pad_len)
    pos_in_row = np.arange(total_pad, dtype=np.int64) - pad_off[row_of]
    valid = pos_in_row < n_row[row_of]
    sv = sym_out[valid]
    parity = pos_in_row[valid] & 1
    delta_syms = sv[parity == 0].astype(np.int64)
    value_bits = sv[parity == 1]

    nnz_row = n_row // 2
    cs = np.cumsum(delta_syms)
    excl = cs - delta_syms
    starts = np.concatenate([[0], np.cumsum(nnz_row)])[:-1]
    excl_pad = np.append(excl, 0)
    cols = cs - np.repeat(excl_pad[starts], nnz_row)
    if c.precision == 8:
        vals = value_bits.view(np.float64)
    else:
        vals = value_bits.astype(np.uint32).view(np.float32)
    return nnz_row, cols, vals


def decode_matrix(c: CsrDtansContainer) -> CsrMatrix:
    """Reconstruct the CSR matrix a container encodes (exact bit patterns)."""
    nnz_row, cols, vals = _decode_slice_range(c, 0, c.nslices)
    row_start = np.zeros(c.rows + 1, dtype=np.int64)
    np.cumsum(nnz_row, out=row_start[1:])
    if row_start[-1] != c.nnz:
        raise CorruptStream("row symbol counts disagree with the header nnz")
    return CsrMatrix(c.rows, c.cols, row_start, cols, vals)


def _accumulate_rows(nnz_row, cols, vals, x, y_rows):
    """Per-row left-to-right accumulation; the fused kernel's arithmetic."""
    nrows = len(nnz_row)
    dtype = vals.dtype
    acc = np.zeros(nrows, dtype=dtype)
    if len(cols):
        order = np.argsort(-nnz_row, kind="stable")
        sorted_nnz = nnz_row[order]
        base = (np.concatenate([[0], np.cumsum(nnz_row)])[:-1])[order]
        max_nnz = int(sorted_nnz[0])
        active = np.searchsorted(-sorted_nnz, -np.arange(1, max_nnz + 1),
                                 side="right")
        for q in range(max_nnz):
            a = int(active[q])
            idx = base[:a] + q
            rows_q = order[:a]
            acc[rows_q] += vals[idx] * x[cols[idx]]
    return acc + y_rows


def spmv(
    c: CsrDtansContainer,
    x: np.ndarray,
    y: np.ndarray,
    threads: int = 1,
) -> np.ndarray:
    """y' = A x + y, decoding the container on the fly slice by slice.

    Bitwise equal to :func:`csrdtans.sparse.reference_spmv` on the decoded
    matrix: per row the products are accumulated strictly left to right in
    the container's precision.  Slices are independent; ``threads`` > 1
    splits the slice range without changing any result.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) != c.cols or len(y) != c.rows:
        raise ParameterError("dimension mismatch")
    dtype = c.value_dtype
    x = x.astype(dtype, copy=False)
    y = y.astype(dtype, copy=False)
    out = np.zeros(c.rows, dtype=dtype)

    def work(slice_lo, slice_hi):
        row_lo = slice_lo * SLICE_HEIGHT
        row_hi = min(slice_hi * SLICE_HEIGHT, c.rows)
        nnz_row, cols, vals = _decode_slice_range(c, slice_lo, slice_hi)
        out[row_lo:row_hi] = _accumulate_rows(nnz_row, cols, vals, x,
                                              y[row_lo:row_hi])

    nslices = c.nslices
    threads = max(1, int(threads))
    if threads == 1 or nslices <= 1:
        if nslices:
            work(0, nslices)
    else:
        from concurrent.futures import ThreadPoolExecutor

        chunk = -(-nslices // threads)
        ranges = [(lo, min(lo + chunk, nslices))
                  for lo in range(0, nslices, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda rg: work(*rg), ranges))
    return out


# ---------------------------------------------------------------------------
# Serialization

# Per-slot record: value symbol, delta symbol, then packed digit/base pairs
# (digit byte, base-1 byte) for the delta table and the value table.
_SLOT_DTYPE = {
    8: np.dtype([("vsym", "<u8"), ("dsym", "<u4"),
                 ("ddig", "u1"), ("dbm1", "u1"), ("vdig", "u1"), ("vbm1", "u1")]),
    4: np.dtype([("vsym", "<u4"), ("dsym", "<u4"),
                 ("ddig", "u1"), ("dbm1", "u1"), ("vdig", "u1"), ("vbm1", "u1")]),
}


def _tables_block(c: CsrDtansContainer) -> bytes:
    k = c.params.k
    rec = np.zeros(k, dtype=_SLOT_DTYPE[c.precision])
    vsent = VALUE_SENTINEL[c.precision]
    for j in range(k):
        ds = c.delta_tables.symbols[j]
        vs = c.value_tables.symbols[j]
        rec["dsym"][j] = DELTA_SENTINEL if ds is ESCAPE else ds
        rec["vsym"][j] = vsent if vs is ESCAPE else vs
        rec["ddig"][j] = c.delta_tables.digits[j]
        rec["dbm1"][j] = c.delta_tables.bases[j] - 1
        rec["vdig"][j] = c.value_tables.digits[j]
        rec["vbm1"][j] = c.value_tables.bases[j] - 1
    return rec.tobytes()


def _tables_from_block(block: bytes, k: int, precision: int):
    rec = np.frombuffer(block, dtype=_SLOT_DTYPE[precision])
    if len(rec) != k:
        raise ContainerError("tables block has the wrong slot count")
    vsent = VALUE_SENTINEL[precision]
    dsyms = [ESCAPE if s == DELTA_SENTINEL else int(s) for s in rec["dsym"]]
    vsyms = [ESCAPE if s == vsent else int(s) for s in rec["vsym"]]
    try:
        delta_tables = CodingTables.from_slots(
            dsyms, rec["ddig"].tolist(),
            (rec["dbm1"].astype(np.int64) + 1).tolist())
        value_tables = CodingTables.from_slots(
            vsyms, rec["vdig"].tolist(),
            (rec["vbm1"].astype(np.int64) + 1).tolist())
    except ParameterError as e:
        raise ContainerError(f"invalid coding tables: {e}") from e
    return delta_tables, value_tables


def serialize(c: CsrDtansContainer) -> bytes:
    """Container bytes: header, params, tables, row counts, directory,
    stream, and a trailing CRC32 of everything before it."""
    p = c.params
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, c.precision, 0,
                     c.rows, c.cols, c.nnz),
        _PARAMS.pack(p.w_log2, p.k_log2, p.m_log2, p.l, p.o, p.f,
                     c.permutation_seed),
        _tables_block(c),
        c.row_symbols.astype("<u4").tobytes(),
        c.directory.astype("<u8").tobytes(),
        struct.pack("<Q", len(c.stream)),
        c.stream.astype("<u4").tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def deserialize(data: bytes) -> CsrDtansContainer:
    """Inverse of :func:`serialize`; rejects bad magic, version, truncation,
    and checksum mismatches."""
    if len(data) < _HEADER.size + _PARAMS.size + 4:
        raise ContainerError("container truncated")
    body, crc_bytes = data[:-4], data[-4:]
    if struct.unpack("<I", crc_bytes)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise ContainerError("checksum mismatch")
    magic, version, precision, _, rows, cols, nnz = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported version {version}")
    if precision not in (4, 8):
        raise ContainerError(f"bad precision {precision}")
    off = _HEADER.size
    wl, kl, ml, l, o, f, seed = _PARAMS.unpack_from(body, off)
    off += _PARAMS.size
    try:
        params = DtansParams(w=2**wl, k=2**kl, m=2**ml, l=l, o=o, f=f)
        params.validate()
    except (ParameterError, OverflowError) as e:
        raise ContainerError(f"invalid parameters: {e}") from e

    def take(nbytes, what):
        nonlocal off
        if off + nbytes > len(body):
            raise ContainerError(f"container truncated in {what}")
        chunk = body[off : off + nbytes]
        off += nbytes
        return chunk

    tables_bytes = take(params.k * _SLOT_DTYPE[precision].itemsize, "tables")
    delta_tables, value_tables = _tables_from_block(tables_bytes, params.k,
                                                    precision)
    row_symbols = np.frombuffer(take(4 * rows, "row counts"), dtype="<u4")
    nslices = -(-rows // SLICE_HEIGHT)
    directory = np.frombuffer(take(8 * (nslices + 1), "directory"),
                              dtype="<u8")
    (nwords,) = struct.unpack("<Q", take(8, "stream length"))
    stream = np.frombuffer(take(4 * nwords, "stream"), dtype="<u4")
    if off != len(body):
        raise ContainerError("trailing bytes after stream")
    if np.any(np.diff(directory.astype(np.int64)) < 0) or (
        nslices >= 0 and len(directory) and directory[-1] != nwords
    ):
        raise ContainerError("directory does not span the stream")
    return CsrDtansContainer(
        rows=rows, cols=cols, nnz=nnz, precision=precision, params=params,
        permutation_seed=seed, delta_tables=delta_tables,
        value_tables=value_tables,
        row_symbols=row_symbols.astype(np.uint32),
        directory=directory.astype(np.uint64),
        stream=stream.astype(np.uint32),
    )


def size_bytes(c: CsrDtansContainer) -> int:
    """Payload size: tables + per-row counts + slice directory + stream
    (excludes the file header, params block, and checksum)."""
    return (
        c.params.k * _SLOT_DTYPE[c.precision].itemsize
        + 4 * c.rows
        + 8 * (c.nslices + 1)
        + 4 * len(c.stream)
    )
