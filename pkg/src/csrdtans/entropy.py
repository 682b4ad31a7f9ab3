"""Symbol statistics, table quantization, and the reference tANS codec.

This module owns everything about *distributions*: empirical symbol counts,
their integer approximation to a table of K slots with a per-symbol
multiplicity cap M, escape selection, and the slot/digit/base coding tables
shared by both codecs.  It also implements the bit-granular tANS coder that
serves as the correctness and compression baseline for the word-granular
codec in :mod:`csrdtans.codec`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class ParameterError(ValueError):
    """Invalid coder or quantizer parameters."""


class CodingError(ValueError):
    """Input that the coder cannot represent (unknown symbol, bad state)."""


class CorruptStream(ValueError):
    """A compressed stream that cannot have been produced by the encoder."""


class AmbiguousRenormalization(CodingError):
    """The digit-first state layout admits two parse lengths here.

    With the digit split off before renormalization, the valid pre-states
    for a (base, digit) pair form the interval [ceil((L-d)/r),
    floor((2L-1-d)/r)], which can span a full doubling for bases that do not
    divide L; the decoder then cannot tell how many bits belong to the step.
    Both codec directions reject such configurations; multiplicities that
    divide L (any power of two) never trigger this.
    """


class _Escape:
    """Singleton marker for the escape symbol in coding tables."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ESCAPE"


#: Reserved table entry signalling that a raw payload follows in the stream.
ESCAPE = _Escape()


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class SymbolDistribution:
    """Empirical distribution: distinct symbols with their occurrence counts."""

    symbols: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.symbols) != len(self.counts):
            raise ParameterError("symbols and counts must have equal length")
        if len(set(self.symbols)) != len(self.symbols):
            raise ParameterError("symbols must be distinct")
        for c in self.counts:
            if int(c) != c or c < 1:
                raise ParameterError(f"counts must be integers >= 1, got {c!r}")

    @classmethod
    def from_counts(cls, counts: Mapping) -> "SymbolDistribution":
        items = [(s, c) for s, c in counts.items() if c > 0]
        return cls(tuple(s for s, _ in items), tuple(int(c) for _, c in items))

    @classmethod
    def from_sequence(cls, seq: Iterable) -> "SymbolDistribution":
        counts: dict = {}
        for s in seq:
            counts[s] = counts.get(s, 0) + 1
        return cls.from_counts(counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def probs(self) -> tuple:
        n = self.total
        return tuple(c / n for c in self.counts)


@dataclass(frozen=True)
class QuantizedDistribution:
    """Integer approximation of a distribution on a table of ``k`` slots.

    ``multiplicities`` is aligned with ``symbols``; an entry of 0 means the
    symbol is escaped and travels as a raw payload of ``raw_width_bits``.
    ``escape_multiplicity`` is the coding base of the escape symbol;
    ``escape_slots`` is the total number of table slots it occupies
    (including filler runs used when the cap ``m`` prevents the retained
    symbols from covering all ``k`` slots).
    """

    symbols: tuple
    multiplicities: tuple
    k: int
    m: int
    escape_multiplicity: int = 0
    escape_slots: int = 0
    raw_width_bits: int = 0

    def __post_init__(self):
        if len(self.symbols) != len(self.multiplicities):
            raise ParameterError("symbols and multiplicities must align")
        if not (1 <= self.m <= self.k):
            raise ParameterError("need 1 <= m <= k")
        retained = [x for x in self.multiplicities if x > 0]
        if any(x > self.m for x in retained):
            raise ParameterError("retained multiplicity exceeds cap m")
        if self.escape_multiplicity > min(self.m, max(self.escape_slots, 1)):
            raise ParameterError("escape multiplicity exceeds cap")
        if (self.escape_slots > 0) != (self.escape_multiplicity > 0):
            raise ParameterError("escape_slots and escape_multiplicity disagree")
        if any(x == 0 for x in self.multiplicities) and not self.escape_multiplicity:
            raise ParameterError("escaped symbols present but no escape entry")
        if sum(retained) + self.escape_slots != self.k:
            raise ParameterError("multiplicities and escape slots must sum to k")

    @property
    def escaped(self) -> frozenset:
        return frozenset(
            s for s, x in zip(self.symbols, self.multiplicities) if x == 0
        )

    @property
    def retained(self) -> tuple:
        return tuple(
            (s, x) for s, x in zip(self.symbols, self.multiplicities) if x > 0
        )

    def multiplicity_of(self, symbol) -> int:
        for s, x in zip(self.symbols, self.multiplicities):
            if s == symbol:
                return x
        raise KeyError(symbol)


def entropy(dist: SymbolDistribution) -> float:
    """Shannon entropy of a distribution in bits per symbol."""
    n = dist.total
    acc = 0.0
    for c in dist.counts:
        acc += c * math.log2(c)
    return math.log2(n) - acc / n


def cross_entropy(dist: SymbolDistribution, q: QuantizedDistribution) -> float:
    """Average bits per symbol of ``dist`` when coded with tables from ``q``.

    Escaped symbols pay the escape-entry cost plus their raw payload width.
    """
    qmap = dict(zip(q.symbols, q.multiplicities))
    in_p = set(dist.symbols)
    for s, x in qmap.items():
        if x > 0 and s not in in_p:
            raise ParameterError(f"symbol {s!r} retained in Q but absent from P")
    logk = math.log2(q.k)
    acc = 0.0
    for s, c in zip(dist.symbols, dist.counts):
        x = qmap.get(s, 0)
        if x > 0:
            acc += c * (logk - math.log2(x))
        else:
            if not q.escape_multiplicity:
                raise ParameterError(
                    f"symbol {s!r} is neither retained nor escapable in Q"
                )
            acc += c * (logk - math.log2(q.escape_multiplicity) + q.raw_width_bits)
    return acc / dist.total


# ---------------------------------------------------------------------------
# Quantization

# Exhaustive retained-set scan is used up to this many candidates; beyond it
# a coarse-to-fine grid keeps large alphabets tractable.
_EXHAUSTIVE_CANDIDATES = 96


def _allocate(counts: Sequence[int], ranks: Sequence[int], slots: int, cap: int):
    """Optimal slot allocation for concave per-entity gain, via marginal greedy.

    Every entity starts at multiplicity 1; remaining slots go one at a time to
    the entity with the largest marginal gain ``c * (log2(m+1) - log2(m))``.
    Ties prefer the smaller rank (the more frequent symbol, then lower index).
    """
    n = len(counts)
    mult = [1] * n
    left = slots - n
    heap = [(-counts[i], ranks[i], i) for i in range(n) if cap > 1]
    heapq.heapify(heap)
    while left > 0 and heap:
        _, _, i = heapq.heappop(heap)
        mult[i] += 1
        left -= 1
        if mult[i] < cap:
            gain = counts[i] * (math.log2(mult[i] + 1) - math.log2(mult[i]))
            heapq.heappush(heap, (-gain, ranks[i], i))
    return mult, left


def quantize(
    dist: SymbolDistribution,
    k: int,
    m: int,
    raw_width_bits: int,
    *,
    never_retain: frozenset = frozenset(),
) -> QuantizedDistribution:
    """Approximate ``dist`` on ``k`` slots, capping multiplicities at ``m``.

    Minimizes the estimated total encoded size (cross entropy times the
    occurrence total, with escaped symbols paying ``raw_width_bits`` each).
    Symbols in ``never_retain`` are always escaped.  Deterministic for a
    fixed input.
    """
    if k < 2:
        raise ParameterError("k must be >= 2")
    if not (1 <= m <= k):
        raise ParameterError("need 1 <= m <= k")
    n = len(dist.symbols)
    counts = dist.counts
    total = dist.total if n else 0
    order = sorted(range(n), key=lambda i: (-counts[i], i))
    eligible = [i for i in order if dist.symbols[i] not in never_retain]
    logk = math.log2(k)

    def evaluate(kk):
        retained_idx = eligible[:kk]
        retained_counts = [counts[i] for i in retained_idx]
        escaped_count = total - sum(retained_counts)
        escape_needed = escaped_count > 0
        n_ent = kk + (1 if escape_needed else 0)
        if n_ent > k or (n_ent == 0 and total > 0):
            return None
        if n_ent == 0:
            # Empty distribution: escape-only table.
            return (0.0, [], min(m, k), k)
        ent_counts = retained_counts + ([escaped_count] if escape_needed else [])
        ent_ranks = list(range(n_ent))
        mult, leftover = _allocate(ent_counts, ent_ranks, k, m)
        esc_mult = mult[-1] if escape_needed else 0
        retained_mult = mult[:kk]
        if leftover > 0 and not escape_needed:
            if kk + 1 > k:
                return None
            esc_mult = min(m, leftover)
            leftover -= esc_mult
        escape_slots = (esc_mult + leftover) if esc_mult else 0
        if esc_mult == 0 and leftover > 0:
            return None
        cost = 0.0
        for c, x in zip(retained_counts, retained_mult):
            cost += c * (logk - math.log2(x))
        if escaped_count > 0:
            cost += escaped_count * (logk - math.log2(esc_mult) + raw_width_bits)
        return (cost, list(zip(retained_idx, retained_mult)), esc_mult, escape_slots)

    kk_hi = min(len(eligible), k)

    def best_in(lo, hi, step):
        best = None
        kk = hi
        while kk >= lo:
            res = evaluate(kk)
            if res is not None and (best is None or res[0] < best[1][0]):
                best = (kk, res)
            kk -= step
        return best

    if kk_hi + 1 <= _EXHAUSTIVE_CANDIDATES:
        best = best_in(0, kk_hi, 1)
    else:
        # Coarse-to-fine scan; the cost is unimodal in practice for the
        # count-sorted suffix escape sets this search walks.
        lo, hi = 0, kk_hi
        while hi - lo + 1 > _EXHAUSTIVE_CANDIDATES:
            step = max(1, (hi - lo) // 32)
            found = best_in(lo, hi, step)
            if found is None:
                break
            center = found[0]
            lo = max(lo, center - 2 * step)
            hi = min(hi, center + 2 * step)
        best = best_in(lo, hi, 1)
    if best is None:
        raise ParameterError("no feasible quantization for these parameters")
    _, (cost, retained_pairs, esc_mult, escape_slots) = best

    mult_by_idx = dict(retained_pairs)
    multiplicities = tuple(mult_by_idx.get(i, 0) for i in range(n))
    return QuantizedDistribution(
        symbols=dist.symbols,
        multiplicities=multiplicities,
        k=k,
        m=m,
        escape_multiplicity=esc_mult,
        escape_slots=escape_slots,
        raw_width_bits=raw_width_bits,
    )


def quantize_cost(dist: SymbolDistribution, q: QuantizedDistribution) -> float:
    """Estimated total encoded size in bits, the objective ``quantize`` minimizes."""
    return dist.total * cross_entropy(dist, q)


# ---------------------------------------------------------------------------
# Coding tables


@dataclass(frozen=True)
class CodingTables:
    """Slot-indexed symbol/digit/base tables plus the (symbol, digit) inverse.

    A retained symbol with multiplicity r occupies exactly r slots whose
    digits are a permutation of 0..r-1 and whose base is r everywhere.  The
    escape symbol may additionally own filler runs (each a shorter digit
    range); only slots of its full-base run are ever produced by encoders,
    so ``reverse`` indexes those alone.
    """

    symbols: tuple
    digits: tuple
    bases: tuple
    k: int
    reverse: dict = field(repr=False)
    _base_of: dict = field(repr=False)

    @classmethod
    def from_slots(cls, symbols, digits, bases) -> "CodingTables":
        k = len(symbols)
        if not (len(digits) == len(bases) == k):
            raise ParameterError("table arrays must have equal length")
        base_of: dict = {}
        for s, d, b in zip(symbols, digits, bases):
            if not (0 <= d < b):
                raise ParameterError("slot digit out of range for its base")
            if s is ESCAPE:
                base_of[ESCAPE] = max(base_of.get(ESCAPE, 0), b)
            else:
                if base_of.setdefault(s, b) != b:
                    raise ParameterError(f"symbol {s!r} has inconsistent bases")
        reverse: dict = {}
        for j, (s, d, b) in enumerate(zip(symbols, digits, bases)):
            if s is ESCAPE and b != base_of[ESCAPE]:
                continue  # filler run, never targeted by encoders
            reverse.setdefault((s, d), j)
        for s, b in base_of.items():
            for d in range(b):
                if (s, d) not in reverse:
                    raise ParameterError(f"missing slot for ({s!r}, digit {d})")
        return cls(tuple(symbols), tuple(digits), tuple(bases), k, reverse, base_of)

    def base_of(self, symbol) -> int:
        try:
            return self._base_of[symbol]
        except KeyError:
            raise CodingError(f"symbol {symbol!r} not covered by tables") from None

    def has_symbol(self, symbol) -> bool:
        return symbol in self._base_of

    @property
    def escape_base(self) -> int:
        return self._base_of.get(ESCAPE, 0)

    def retained_symbols(self) -> tuple:
        return tuple(s for s in self._base_of if s is not ESCAPE)

    def pad_symbol(self):
        """Cheapest padding symbol: the retained symbol of highest
        multiplicity (lowest slot on ties), or None for escape-only tables."""
        best = None
        for j, (s, b) in enumerate(zip(self.symbols, self.bases)):
            if s is ESCAPE:
                continue
            if best is None or b > best[0]:
                best = (b, j, s)
        return best[2] if best else None


def build_tables(q: QuantizedDistribution, permutation=None) -> CodingTables:
    """Materialize coding tables for ``q``.

    ``permutation`` maps canonical positions to slot indices; ``None`` keeps
    the canonical layout in which each symbol's slots are consecutive in
    distribution order, with the escape entry (and its filler runs) last.
    """
    entries = []
    for s, x in zip(q.symbols, q.multiplicities):
        if x > 0:
            entries.extend((s, d, x) for d in range(x))
    if q.escape_slots:
        entries.extend((ESCAPE, d, q.escape_multiplicity)
                       for d in range(q.escape_multiplicity))
        filler = q.escape_slots - q.escape_multiplicity
        while filler > 0:
            run = min(q.escape_multiplicity, filler)
            entries.extend((ESCAPE, d, run) for d in range(run))
            filler -= run
    if len(entries) != q.k:
        raise ParameterError("quantized distribution does not fill the table")
    if permutation is None:
        placed = entries
    else:
        perm = list(permutation)
        if sorted(perm) != list(range(q.k)):
            raise ParameterError("permutation must be a bijection on slots")
        placed = [None] * q.k
        for pos, e in enumerate(entries):
            placed[perm[pos]] = e
    return CodingTables.from_slots(
        [e[0] for e in placed], [e[1] for e in placed], [e[2] for e in placed]
    )


# ---------------------------------------------------------------------------
# Bit streams


class Bits:
    """A growable bit sequence, most significant bit first within bytes."""

    __slots__ = ("_bits",)

    def __init__(self, bits: Iterable[int] = ()):
        self._bits = bytearray(bits)
        if any(b not in (0, 1) for b in self._bits):
            raise ValueError("bits must be 0 or 1")

    @classmethod
    def from01(cls, s: str) -> "Bits":
        return cls(int(ch) for ch in s)

    def append(self, bit: int) -> None:
        self._bits.append(bit)

    def extend(self, bits: Iterable[int]) -> None:
        self._bits.extend(bits)

    def to01(self) -> str:
        return "".join("1" if b else "0" for b in self._bits)

    def to_bytes(self) -> bytes:
        out = bytearray((len(self._bits) + 7) // 8)
        for i, b in enumerate(self._bits):
            if b:
                out[i >> 3] |= 0x80 >> (i & 7)
        return bytes(out)

    def __len__(self) -> int:
        return len(self._bits)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Bits(self._bits[i])
        return self._bits[i]

    def __eq__(self, other) -> bool:
        if isinstance(other, Bits):
            return self._bits == other._bits
        return NotImplemented

    def __iter__(self):
        return iter(self._bits)

    def __repr__(self) -> str:
        return f"Bits({self.to01()!r})"


class _BitReader:
    __slots__ = ("_bits", "pos")

    def __init__(self, bits: Bits):
        self._bits = bits
        self.pos = 0

    def read(self) -> int:
        if self.pos >= len(self._bits):
            raise CorruptStream("bit stream exhausted")
        b = self._bits[self.pos]
        self.pos += 1
        return b


# ---------------------------------------------------------------------------
# Reference tANS codec


@dataclass(frozen=True)
class TansParams:
    """Table size and state normalization interval [L, 2L-1]."""

    k: int
    L: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.L < self.k:
            raise ParameterError("L must be >= k")
        if self.L % self.k != 0:
            # Renormalization is uniquely decodable only when the state
            # interval splits evenly over the K slot residues.
            raise ParameterError("L must be a multiple of k")


def _parse_bounds(L: int, r: int, d: int) -> tuple:
    """Valid pre-renormalization values t with t*r + d in [L, 2L-1]."""
    return (L - d + r - 1) // r, (2 * L - 1 - d) // r


def _check_unambiguous(x: int, t_lo: int, t_hi: int, r: int, d: int) -> None:
    """Reject configurations where bit-count recovery has two answers.

    Growing from x by doubling, a stop value c with 2c <= t_hi could also be
    the prefix of a longer parse; if any such c is reachable, neither side
    can pin the chunk length.
    """
    half = t_hi // 2
    if t_lo > half:
        return  # every valid parse value is within one doubling: unique
    lo, hi = x, x
    while lo <= half:
        if hi >= t_lo:
            raise AmbiguousRenormalization(
                f"base {r} with digit {d} admits parse values up to one "
                f"doubling apart (window [{t_lo}, {t_hi}] from state part {x})"
            )
        lo, hi = 2 * lo, 2 * hi + 1


def tans_encode(u: Sequence, tables: CodingTables, params: TansParams):
    """Encode ``u`` right to left; returns the final state and the bit stream.

    The stream is laid out in decode order: the chunk consumed when decoding
    u[0] comes first, bits within a chunk most significant first.
    """
    if params.k != tables.k:
        raise ParameterError("params.k does not match tables")
    lam_hi = 2 * (params.L // params.k) - 1
    s = params.L
    chunks = []
    for sym in reversed(u):
        if not tables.has_symbol(sym) or sym is ESCAPE:
            raise CodingError(f"symbol {sym!r} not covered by tables")
        r = tables.base_of(sym)
        d = s % r
        j = tables.reverse[(sym, d)]
        t = s // r
        nbits = 0
        while t > lam_hi:
            nbits += 1
            t >>= 1
        t_lo, t_hi = _parse_bounds(params.L, r, d)
        _check_unambiguous(t, t_lo, t_hi, r, d)
        b = (s // r) & ((1 << nbits) - 1)
        s = t * params.k + j
        assert params.L <= s <= 2 * params.L - 1
        chunks.append((b, nbits))
    stream = Bits()
    for b, nbits in reversed(chunks):
        for i in range(nbits - 1, -1, -1):
            stream.append((b >> i) & 1)
    return s, stream


def tans_decode(s0: int, v: Bits, tables: CodingTables, params: TansParams, n: int):
    """Invert :func:`tans_encode`; returns ``u`` in original order."""
    if params.k != tables.k:
        raise ParameterError("params.k does not match tables")
    if not (params.L <= s0 <= 2 * params.L - 1):
        raise CorruptStream(f"initial state {s0} outside [{params.L}, {2*params.L-1}]")
    reader = _BitReader(v)
    s = s0
    out = []
    for _ in range(n):
        j = s % params.k
        sym = tables.symbols[j]
        if sym is ESCAPE:
            raise CorruptStream("decoded an escape slot in the reference codec")
        d = tables.digits[j]
        r = tables.bases[j]
        t = s // params.k
        t_lo, t_hi = _parse_bounds(params.L, r, d)
        _check_unambiguous(t, t_lo, t_hi, r, d)
        while t * r + d < params.L:
            t = (t << 1) | reader.read()
        s = t * r + d
        if s > 2 * params.L - 1:
            raise CorruptStream("state left the normalization interval")
        out.append(sym)
    return out
