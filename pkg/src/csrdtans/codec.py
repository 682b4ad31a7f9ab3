"""Decoupled tANS: word-granular streams decoded segment by segment.

The decoder consumes fixed-radix words (radix W).  Each segment unpacks o
words into l slot indices, looks the symbols up in parallel, and folds the
returned digit/base pairs into a mixed-radix state (d, r).  Whenever the
state holds at least one word of information (r >= W), the next word is
extracted from it instead of being loaded, which is what the f conditional
checks per segment decide.  The encoder reproduces the exact stream in two
passes: a forward base pass that fixes the branch taken at every check (the
bases alone determine them), and a backward digit pass that mirrors the
decoder's loop structure exactly, recovering slot digits from the state and
emitting the loaded words front-to-back in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .entropy import ESCAPE, CodingTables, CodingError, CorruptStream, ParameterError


def _is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class DtansParams:
    """Stream geometry: word radix W, table size K, cap M, and the segment
    shape (l symbols, o words, f conditional checks)."""

    w: int
    k: int
    m: int
    l: int
    o: int
    f: int

    @classmethod
    def production(cls) -> "DtansParams":
        return cls(w=2**32, k=4096, m=256, l=8, o=3, f=2)

    @classmethod
    def toy(cls) -> "DtansParams":
        return cls(w=4, k=8, m=4, l=2, o=3, f=2)

    @property
    def w_log2(self) -> int:
        return self.w.bit_length() - 1

    @property
    def k_log2(self) -> int:
        return self.k.bit_length() - 1

    @property
    def m_log2(self) -> int:
        return self.m.bit_length() - 1

    def check_groups(self) -> list:
        """Symbol positions accumulated before each conditional check.

        The l positions split into f groups, as even as possible with the
        earlier groups larger, one check after each group.
        """
        sizes = [self.l // self.f] * self.f
        for i in range(self.l % self.f):
            sizes[i] += 1
        groups, pos = [], 0
        for size in sizes:
            groups.append(list(range(pos, pos + size)))
            pos += size
        return groups

    def validate(self) -> None:
        problems = validate_params(self)
        if problems:
            raise ParameterError("; ".join(problems))


def validate_params(p: DtansParams) -> list:
    """Check every parameter constraint; returns violation strings (empty = ok)."""
    problems = []
    for name in ("w", "k", "m"):
        v = getattr(p, name)
        if not _is_pow2(v) or v < 2:
            problems.append(f"{name} = {v} is not a power of two >= 2")
    if p.l < 1 or p.o < 1 or p.f < 0:
        problems.append(f"need l >= 1, o >= 1, f >= 0 (got l={p.l}, o={p.o}, f={p.f})")
        return problems
    if problems:
        return problems
    if p.m > p.k:
        problems.append(f"multiplicity cap m = {p.m} exceeds table size k = {p.k}")
    if p.k**p.l < p.w**p.o:
        problems.append(
            f"k^l = {p.k**p.l} < w^o = {p.w**p.o}: words are not representable as slots"
        )
    elif p.k**p.l >= p.w ** (p.o + 1):
        problems.append(
            f"o = {p.o} wastes words: k^l = {p.k**p.l} >= w^(o+1) = {p.w**(p.o+1)}"
        )
    if p.m**p.l > p.w**p.f:
        problems.append(
            f"m^l = {p.m**p.l} > w^f = {p.w**p.f}: checks cannot drain the state"
        )
    if p.f > p.o:
        problems.append(f"f = {p.f} exceeds words per segment o = {p.o}")
    return problems


# ---------------------------------------------------------------------------
# Mixed-radix kernel


@dataclass(frozen=True)
class DecoderState:
    """Accumulated digit d and radix r, with 0 <= d < r."""

    d: int = 0
    r: int = 1

    def __post_init__(self):
        if not (0 <= self.d < self.r):
            raise ParameterError(f"invalid state d={self.d}, r={self.r}")


def accumulate(state: DecoderState, digit: int, base: int) -> DecoderState:
    """Append a digit: d' = d*base + digit, r' = r*base.

    Bases are stored decremented in serialized tables; the fused
    multiply-add form below is the same arithmetic the table-driven
    paths use, so the two stay bit-identical.
    """
    if not (0 <= digit < base):
        raise ParameterError(f"digit {digit} out of range for base {base}")
    bm1 = base - 1
    return DecoderState(state.d * bm1 + state.d + digit, state.r * bm1 + state.r)


def extract_word(state: DecoderState, w: int) -> tuple:
    """Split one radix-w word off the low end of the state; needs r >= w."""
    if state.r < w:
        raise ParameterError(f"cannot extract: r = {state.r} < w = {w}")
    word = state.d % w
    return word, DecoderState(state.d // w, state.r // w)


def unpack(words: Sequence[int], p: DtansParams) -> tuple:
    """Re-digit o radix-W words as l radix-K slot indices (least significant
    slot first); words[0] is the most significant word."""
    if len(words) != p.o:
        raise ParameterError(f"unpack needs {p.o} words, got {len(words)}")
    n = 0
    for w in words:
        if not (0 <= w < p.w):
            raise ParameterError(f"word {w} out of radix {p.w}")
        n = n * p.w + w
    slots = []
    for _ in range(p.l):
        slots.append(n % p.k)
        n //= p.k
    return tuple(slots)


def pack(slots: Sequence[int], p: DtansParams) -> tuple:
    """Exact inverse of :func:`unpack`."""
    if len(slots) != p.l:
        raise ParameterError(f"pack needs {p.l} slots, got {len(slots)}")
    n = 0
    for i in reversed(slots):
        if not (0 <= i < p.k):
            raise ParameterError(f"slot {i} out of table size {p.k}")
        n = n * p.k + i
    words = []
    for _ in range(p.o):
        words.append(n % p.w)
        n //= p.w
    if n:
        raise CodingError("slot tuple not representable in o words (k^l > w^o)")
    return tuple(reversed(words))


# ---------------------------------------------------------------------------
# Streams and traces


@dataclass
class WordStream:
    """A sequence of radix-W words with a read cursor."""

    words: list
    cursor: int = 0

    def read(self) -> int:
        if self.cursor >= len(self.words):
            raise CorruptStream("word stream exhausted")
        w = self.words[self.cursor]
        self.cursor += 1
        return w

    def remaining(self) -> int:
        return len(self.words) - self.cursor

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class SegmentTrace:
    """Stream consumption of one segment.

    ``checks`` holds one flag per conditional check (True = loaded from the
    stream, False = extracted from the state); it is None for the final
    segment, whose checks and unconditional loads are skipped because no
    further unpack needs them.
    """

    payload_words: int
    checks: tuple | None
    uncond_words: int

    @property
    def loads(self) -> int:
        loaded = sum(1 for c in self.checks if c) if self.checks else 0
        return self.payload_words + loaded + self.uncond_words


@dataclass(frozen=True)
class DecodeTrace:
    init_words: int
    segments: tuple

    def total_words(self) -> int:
        return self.init_words + sum(s.loads for s in self.segments)


def _payload_word_count(raw_width_bits: int, p: DtansParams) -> int:
    return -(-raw_width_bits // p.w_log2)


def _position_info(padded, tables, p, raw_widths):
    """Per padded position: table, reverse key, base, and escape payload."""
    ndom = len(tables)
    info = []
    for t, sym in enumerate(padded):
        tab = tables[t % ndom]
        if tab.has_symbol(sym) and sym is not ESCAPE:
            info.append((tab, sym, tab.base_of(sym), None))
        else:
            if tab.escape_base == 0:
                raise CodingError(
                    f"symbol {sym!r} at position {t} is not retained and the "
                    "table has no escape entry"
                )
            if raw_widths is None:
                raise CodingError("escapes present but raw widths not given")
            nw = _payload_word_count(raw_widths[t % ndom], p)
            val = int(sym)
            if val < 0 or val >= p.w**nw:
                raise CodingError(f"payload {sym!r} exceeds its raw width")
            payload = tuple((val >> (p.w_log2 * i)) & (p.w - 1) for i in range(nw))
            info.append((tab, ESCAPE, tab.escape_base, payload))
    return info


def _pad(u, tables, p):
    n = len(u)
    nseg = -(-n // p.l)
    padded = list(u)
    ndom = len(tables)
    for t in range(n, nseg * p.l):
        sym = tables[t % ndom].pad_symbol()
        # Escape-only tables pad with a zero payload.
        padded.append(0 if sym is None else sym)
    return padded, nseg


def _base_pass(info, nseg, groups, p):
    """Branch flags for segments 0..nseg-2 from the bases alone (True = load)."""
    flags = []
    r = 1
    for j in range(nseg - 1):
        seg_flags = []
        for group in groups:
            for k in group:
                r *= info[j * p.l + k][2]
            if r >= p.w:
                r //= p.w
                seg_flags.append(False)
            else:
                seg_flags.append(True)
        flags.append(tuple(seg_flags))
    return flags


def dtans_encode(
    u: Sequence,
    tables: Sequence[CodingTables],
    p: DtansParams,
    raw_widths: Sequence[int] | None = None,
):
    """Encode ``u`` into a word stream; returns ``(stream, trace)``.

    ``tables`` lists one coding table per symbol domain; position t of the
    input uses ``tables[t % len(tables)]``.  Symbols not retained in their
    table are escaped, emitting a raw payload of ``raw_widths[domain]`` bits.
    The trace matches what :func:`dtans_decode` reports and drives the
    warp-interleaving of container streams.
    """
    p.validate()
    if p.k**p.l != p.w**p.o:
        raise ParameterError(
            "encoding requires k^l == w^o exactly so every slot tuple packs"
        )
    for tab in tables:
        if tab.k != p.k:
            raise ParameterError("table size does not match params")
    n = len(u)
    if n == 0:
        return WordStream([]), DecodeTrace(0, ())
    padded, nseg = _pad(u, tables, p)
    info = _position_info(padded, tables, p, raw_widths)
    groups = p.check_groups()
    flags = _base_pass(info, nseg, groups, p)

    # Digit pass: mirror the decoder backward, prepending every emitted word.
    rev = []

    def emit_payloads_reversed(j):
        for t in range(j * p.l + p.l - 1, j * p.l - 1, -1):
            payload = info[t][3]
            if payload is not None:
                rev.extend(reversed(payload))

    def slot_for(t, digit):
        tab, key, _, _ = info[t]
        return tab.reverse[(key, digit)]

    d = 0
    # Digits of the final segment are never folded into the state; give them
    # digit 0 canonically.
    last = nseg - 1
    slots_next = [slot_for(last * p.l + k, 0) for k in range(p.l)]
    emit_payloads_reversed(last)
    w_next = pack(slots_next, p)
    for j in range(nseg - 2, -1, -1):
        for c in range(p.o - 1, p.f - 1, -1):
            rev.append(w_next[c])
        slots_j = [0] * p.l
        for c in range(p.f - 1, -1, -1):
            if flags[j][c]:
                rev.append(w_next[c])
            else:
                d = d * p.w + w_next[c]
            for k in reversed(groups[c]):
                t = j * p.l + k
                b = info[t][2]
                slots_j[k] = slot_for(t, d % b)
                d //= b
        emit_payloads_reversed(j)
        w_next = pack(slots_j, p)
    for c in range(p.o - 1, -1, -1):
        rev.append(w_next[c])
    assert d == 0, "digit pass must drain the state completely"

    words = list(reversed(rev))
    trace = _trace_from_flags(info, flags, nseg, p)
    return WordStream(words), trace


def _trace_from_flags(info, flags, nseg, p):
    segments = []
    for j in range(nseg):
        payload = sum(
            len(info[j * p.l + k][3] or ()) for k in range(p.l)
        )
        if j < nseg - 1:
            segments.append(SegmentTrace(payload, flags[j], p.o - p.f))
        else:
            segments.append(SegmentTrace(payload, None, 0))
    return DecodeTrace(p.o, tuple(segments))


def dtans_decode(
    v: WordStream,
    tables: Sequence[CodingTables],
    p: DtansParams,
    n: int,
    raw_widths: Sequence[int] | None = None,
):
    """Decode ``n`` symbols from ``v``; returns ``(u, trace)``.

    Reads o initial words, then per segment: unpack, l parallel lookups
    (escapes read their payload immediately after the unpack), digit
    accumulation with f conditional checks, and o-f unconditional loads.
    The final segment performs no loads beyond its payloads.
    """
    p.validate()
    for tab in tables:
        if tab.k != p.k:
            raise ParameterError("table size does not match params")
    if n == 0:
        return [], DecodeTrace(0, ())
    ndom = len(tables)
    nseg = -(-n // p.l)
    groups = p.check_groups()
    r_bound = p.w * p.m**p.l

    w = [v.read() for _ in range(p.o)]
    d, r = 0, 1
    out = []
    segments = []
    for j in range(nseg):
        slots = unpack(w, p)
        payload_words = 0
        for k in range(p.l):
            tab = tables[(j * p.l + k) % ndom]
            sym = tab.symbols[slots[k]]
            if sym is ESCAPE:
                if raw_widths is None:
                    raise CorruptStream("escape slot decoded but no raw widths given")
                nw = _payload_word_count(raw_widths[(j * p.l + k) % ndom], p)
                val = 0
                for i in range(nw):
                    val |= v.read() << (p.w_log2 * i)
                payload_words += nw
                out.append(val)
            else:
                out.append(sym)
        if j == nseg - 1:
            segments.append(SegmentTrace(payload_words, None, 0))
            break
        seg_flags = []
        for c, group in enumerate(groups):
            for k in group:
                tab = tables[(j * p.l + k) % ndom]
                slot = slots[k]
                bm1 = tab.bases[slot] - 1
                d = d * bm1 + d + tab.digits[slot]
                r = r * bm1 + r
                assert r < r_bound, "decoder radix exceeded its bound"
            if r >= p.w:
                w[c] = d % p.w
                d //= p.w
                r //= p.w
                seg_flags.append(False)
            else:
                w[c] = v.read()
                seg_flags.append(True)
        for c in range(p.f, p.o):
            w[c] = v.read()
        segments.append(SegmentTrace(payload_words, tuple(seg_flags), p.o - p.f))
    return out[:n], DecodeTrace(p.o, tuple(segments))


def branch_flags(
    u: Sequence,
    tables: Sequence[CodingTables],
    p: DtansParams,
    raw_widths: Sequence[int] | None = None,
) -> tuple:
    """The forward base pass alone: per-segment check flags (True = load).

    Depends only on the sequence of bases of ``u``; decoding the encoded
    stream reproduces exactly these branches.
    """
    if len(u) == 0:
        return ()
    padded, nseg = _pad(u, tables, p)
    info = _position_info(padded, tables, p, raw_widths)
    return tuple(_base_pass(info, nseg, p.check_groups(), p))
