"""Tests for the word-granular dtANS codec."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csrdtans.entropy import (
    ESCAPE,
    CodingError,
    CorruptStream,
    ParameterError,
    QuantizedDistribution,
    SymbolDistribution,
    build_tables,
    cross_entropy,
    entropy,
    quantize,
)
from csrdtans.codec import (
    DecoderState,
    DtansParams,
    WordStream,
    accumulate,
    branch_flags,
    dtans_decode,
    dtans_encode,
    extract_word,
    pack,
    unpack,
    validate_params,
)

TOY = DtansParams.toy()
PROD = DtansParams.production()
U_ABC = list("cbcbccbbba")
# Compressed representation of U_ABC at toy parameters, with the trailing
# words that the end-of-stream skip rule makes redundant.
TOY_GOLDEN = [1, 1, 1, 2, 3, 1, 2, 1, 1, 0, 0]


def abc_tables():
    q = QuantizedDistribution(("a", "b", "c"), (1, 4, 3), k=8, m=8)
    return [build_tables(q)]


class TestValidateParams:
    def test_production_ok_and_tight(self):
        assert validate_params(PROD) == []
        assert PROD.k**PROD.l == PROD.w**PROD.o
        assert PROD.m**PROD.l == PROD.w**PROD.f

    def test_toy_ok(self):
        assert validate_params(TOY) == []
        assert TOY.k**TOY.l == TOY.w**TOY.o == 64

    def test_insufficient_checks(self):
        bad = DtansParams(w=4, k=8, m=4, l=2, o=3, f=1)
        problems = validate_params(bad)
        assert any("m^l" in s for s in problems)

    def test_non_power_of_two(self):
        assert validate_params(DtansParams(w=4, k=6, m=4, l=2, o=3, f=2))

    def test_wasted_words(self):
        assert validate_params(DtansParams(w=4, k=8, m=4, l=2, o=4, f=2))

    def test_check_groups_split_evenly(self):
        assert PROD.check_groups() == [[0, 1, 2, 3], [4, 5, 6, 7]]
        assert TOY.check_groups() == [[0], [1]]


class TestPackUnpack:
    def test_unpack_example(self):
        assert unpack((1, 1, 1), TOY) == (5, 2)

    def test_unpack_zero(self):
        assert unpack((0, 0, 0), TOY) == (0, 0)

    def test_pack_example(self):
        assert pack((5, 2), TOY) == (1, 1, 1)

    def test_pack_zero(self):
        assert pack((0, 0), TOY) == (0, 0, 0)

    @given(st.lists(st.integers(0, 3), min_size=3, max_size=3))
    def test_pack_unpack_identity_on_words(self, ws):
        assert pack(unpack(tuple(ws), TOY), TOY) == tuple(ws)

    @given(st.lists(st.integers(0, 7), min_size=2, max_size=2))
    def test_unpack_pack_identity_on_slots(self, slots):
        assert unpack(pack(tuple(slots), TOY), TOY) == tuple(slots)

    @given(st.lists(st.integers(0, 2**32 - 1), min_size=3, max_size=3))
    def test_production_word_roundtrip(self, ws):
        assert pack(unpack(tuple(ws), PROD), PROD) == tuple(ws)


class TestStateKernel:
    def test_accumulate_first_digit(self):
        assert accumulate(DecoderState(0, 1), 0, 3) == DecoderState(0, 3)

    def test_accumulate_second_digit(self):
        assert accumulate(DecoderState(0, 3), 1, 4) == DecoderState(1, 12)

    def test_accumulate_base_one_is_identity(self):
        s = DecoderState(5, 9)
        assert accumulate(s, 0, 1) == s

    def test_extract_example(self):
        word, s = extract_word(DecoderState(1, 12), 4)
        assert word == 1 and s == DecoderState(0, 3)

    def test_extract_zero(self):
        w = 16
        word, s = extract_word(DecoderState(0, w), w)
        assert word == 0 and s == DecoderState(0, 1)

    def test_extract_max_word(self):
        w = 16
        word, s = extract_word(DecoderState(w - 1, w), w)
        assert word == w - 1 and s == DecoderState(0, 1)

    def test_extract_requires_enough_radix(self):
        with pytest.raises(ParameterError):
            extract_word(DecoderState(1, 3), 4)


class TestToyGolden:
    """The worked toy stream 11123121100 in radix 4 decodes to cbcbccbbba."""

    def test_decode_golden(self):
        u, _ = dtans_decode(WordStream(list(TOY_GOLDEN)), abc_tables(), TOY, 10)
        assert u == U_ABC

    def test_decode_consumes_all_but_skippable_tail(self):
        v = WordStream(list(TOY_GOLDEN))
        dtans_decode(v, abc_tables(), TOY, 10)
        assert v.cursor == 9
        assert TOY_GOLDEN[9:] == [0, 0]

    def test_first_segment_internals(self):
        # unpack(1,1,1) -> slots (5, 2) -> symbols (c, b); first check loads
        # w1 = 2, second extracts w2 = 1 leaving state (0, 3), then w3 = 3 is
        # loaded unconditionally.
        tab = abc_tables()[0]
        assert unpack((1, 1, 1), TOY) == (5, 2)
        assert (tab.symbols[5], tab.symbols[2]) == ("c", "b")
        s = accumulate(DecoderState(0, 1), tab.digits[5], tab.bases[5])
        assert s.r < TOY.w  # first conditional check must load
        assert TOY_GOLDEN[3] == 2
        s = accumulate(s, tab.digits[2], tab.bases[2])
        assert s == DecoderState(1, 12)
        word, s = extract_word(s, TOY.w)
        assert word == 1 and s == DecoderState(0, 3)
        assert TOY_GOLDEN[4] == 3  # unconditional load
        u, trace = dtans_decode(WordStream(list(TOY_GOLDEN)), abc_tables(), TOY, 10)
        assert trace.segments[0].checks == (True, False)

    def test_encode_golden_modulo_skippable_tail(self):
        v, _ = dtans_encode(U_ABC, abc_tables(), TOY)
        assert v.words == TOY_GOLDEN[:9]
        assert v.words + [0, 0] == TOY_GOLDEN

    def test_decode_n_zero_consumes_nothing(self):
        v = WordStream(list(TOY_GOLDEN))
        u, trace = dtans_decode(v, abc_tables(), TOY, 0)
        assert u == [] and v.cursor == 0 and trace.total_words() == 0

    def test_single_symbol_stream_costs_o_words(self):
        v, _ = dtans_encode(["b"], abc_tables(), TOY)
        assert len(v) == TOY.o
        u, _ = dtans_decode(v, abc_tables(), TOY, 1)
        assert u == ["b"]


class TestEncodeErrors:
    def test_unknown_symbol_without_escape(self):
        with pytest.raises(CodingError):
            dtans_encode(["z"], abc_tables(), TOY)

    def test_truncated_stream(self):
        v, _ = dtans_encode(U_ABC, abc_tables(), TOY)
        with pytest.raises(CorruptStream):
            dtans_decode(WordStream(v.words[:4]), abc_tables(), TOY, 10)

    def test_encode_requires_exact_packing(self):
        lossy = DtansParams(w=4, k=8, m=2, l=3, o=4, f=2)
        assert validate_params(lossy) == []  # decodable geometry, k^l > w^o
        q = QuantizedDistribution(("a", "b", "c", "d"), (2, 2, 2, 2), k=8, m=8)
        with pytest.raises(ParameterError):
            dtans_encode(["a"], [build_tables(q)], lossy)


def toy_roundtrip_case(rng, with_escape=False):
    nsym = rng.randint(1, 4)
    counts = {chr(97 + i): rng.randint(1, 30) for i in range(nsym)}
    d = SymbolDistribution.from_counts(counts)
    q = quantize(d, k=8, m=4, raw_width_bits=4)
    tables = [build_tables(q)]
    retained = [s for s, x in zip(q.symbols, q.multiplicities) if x > 0]
    pool = list(retained)
    raw_widths = None
    if with_escape:
        # Escaped symbols travel as 4-bit (2-word) raw payloads at W = 4.
        pool = pool + [rng.randint(0, 15) for _ in range(3)]
        raw_widths = (4,)
    n = rng.randint(0, 40)
    u = [rng.choice(pool) for _ in range(n)] if pool else []
    return u, tables, raw_widths


class TestRoundtrip:
    @pytest.mark.parametrize("seed", range(40))
    def test_toy_params(self, seed):
        rng = random.Random(seed)
        u, tables, _ = toy_roundtrip_case(rng)
        v, etrace = dtans_encode(u, tables, TOY)
        got, dtrace = dtans_decode(v, tables, TOY, len(u))
        assert got == u
        assert etrace == dtrace
        assert v.cursor == len(v.words)  # decode consumed exactly what encode emitted

    @pytest.mark.parametrize("seed", range(25))
    def test_toy_params_with_escapes(self, seed):
        rng = random.Random(1000 + seed)
        d = SymbolDistribution.from_counts({1: 20, 2: 10, 9: 1, 12: 1, 15: 1})
        q = quantize(d, k=8, m=4, raw_width_bits=4, never_retain=frozenset({9, 12, 15}))
        tables = [build_tables(q)]
        u = [rng.choice([1, 2, 9, 12, 15, 7, 0]) for _ in range(rng.randint(0, 50))]
        v, etrace = dtans_encode(u, tables, TOY, raw_widths=(4,))
        got, dtrace = dtans_decode(v, tables, TOY, len(u), raw_widths=(4,))
        assert got == u
        assert etrace == dtrace

    @pytest.mark.parametrize("seed", range(10))
    def test_production_params(self, seed):
        rng = random.Random(seed)
        counts = {rng.randrange(2**32): rng.randint(1, 100) for _ in range(200)}
        rare = [rng.randrange(2**32) for _ in range(8)]
        for s in rare:
            counts[s] = 1
        d = SymbolDistribution.from_counts(counts)
        q = quantize(d, k=4096, m=256, raw_width_bits=32,
                     never_retain=frozenset(rare))
        tables = [build_tables(q)]
        retained = [s for s, x in zip(q.symbols, q.multiplicities) if x > 0]
        u = [rng.choice(retained) for _ in range(rng.randint(0, 300))]
        u += [rng.choice(rare) for _ in range(rng.randint(0, 20))]
        rng.shuffle(u)
        v, _ = dtans_encode(u, tables, PROD, raw_widths=(32,))
        got, _ = dtans_decode(v, tables, PROD, len(u), raw_widths=(32,))
        assert got == u

    @pytest.mark.parametrize("seed", range(10))
    def test_two_domains(self, seed):
        # Alternating delta/value domains as the matrix container uses them.
        rng = random.Random(seed)
        d1 = SymbolDistribution.from_counts({i: rng.randint(1, 9) for i in range(1, 6)})
        d2 = SymbolDistribution.from_counts(
            {i * 11: rng.randint(1, 9) for i in range(1, 7)}
        )
        q1 = quantize(d1, k=8, m=4, raw_width_bits=4)
        q2 = quantize(d2, k=8, m=4, raw_width_bits=8)
        tables = [build_tables(q1), build_tables(q2)]
        r1 = [s for s, x in zip(q1.symbols, q1.multiplicities) if x > 0]
        r2 = [s for s, x in zip(q2.symbols, q2.multiplicities) if x > 0]
        n = rng.randint(0, 30)
        u = []
        for t in range(2 * n):
            u.append(rng.choice(r1) if t % 2 == 0 else rng.choice(r2))
        v, _ = dtans_encode(u, tables, TOY, raw_widths=(4, 8))
        got, _ = dtans_decode(v, tables, TOY, len(u), raw_widths=(4, 8))
        assert got == u

    def test_degenerate_single_symbol_table(self):
        q = QuantizedDistribution(("x",), (8,), k=8, m=8)
        tables = [build_tables(q)]
        u = ["x"] * TOY.l
        v, _ = dtans_encode(u, tables, TOY)
        got, _ = dtans_decode(v, tables, TOY, len(u))
        assert got == u


class TestInvariants:
    @pytest.mark.parametrize("seed", range(20))
    def test_branch_determinism(self, seed):
        # Check outcomes depend only on the bases of u, never on digits.
        rng = random.Random(seed)
        u, tables, _ = toy_roundtrip_case(rng)
        flags = branch_flags(u, tables, TOY)
        v, etrace = dtans_encode(u, tables, TOY)
        _, dtrace = dtans_decode(v, tables, TOY, len(u))
        assert tuple(s.checks for s in etrace.segments if s.checks is not None) == flags
        assert tuple(s.checks for s in dtrace.segments if s.checks is not None) == flags

    @pytest.mark.parametrize("seed", range(20))
    def test_word_accounting(self, seed):
        rng = random.Random(100 + seed)
        u, tables, _ = toy_roundtrip_case(rng)
        v, trace = dtans_encode(u, tables, TOY)
        assert trace.total_words() == len(v.words)
        for seg in trace.segments:
            if seg.checks is not None:
                extractions = sum(1 for c in seg.checks if not c)
                assert extractions <= TOY.f
                assert seg.loads == seg.payload_words + (TOY.o - extractions)

    def test_compression_close_to_reference_tans(self):
        # Identical tables, full-size words: bits/symbol within 0.1 of the
        # reference coder.  (Dyadic multiplicities keep the reference total.)
        from csrdtans.entropy import TansParams, tans_encode

        rng = random.Random(5)
        d = SymbolDistribution.from_counts({"a": 1, "b": 1, "c": 2, "d": 4})
        q = quantize(d, k=8, m=8, raw_width_bits=32)
        tables = [build_tables(q)]
        # k^l = w^o needs l = 32 slots per segment for k = 8 at 32-bit words.
        params = DtansParams(w=2**32, k=8, m=8, l=32, o=3, f=3)
        assert validate_params(params) == []
        n = 96_000
        u = rng.choices(d.symbols, weights=d.counts, k=n)
        v, _ = dtans_encode(u, tables, params)
        dtans_bits = len(v.words) * params.w_log2
        _, bits = tans_encode(u, tables[0], TansParams(k=8, L=16))
        assert abs(dtans_bits / n - len(bits) / n) < 0.1

    def test_compression_bounded_by_cross_entropy_toy_words(self):
        # At 2-bit words the floor(r/W) truncation costs a visible fraction
        # of a bit per symbol; 0.2 covers it here (it vanishes at 32-bit
        # words, where the acceptance suite pins the 0.1 bound).
        rng = random.Random(6)
        d = SymbolDistribution.from_counts({"a": 1, "b": 5, "c": 4})
        q = quantize(d, k=8, m=4, raw_width_bits=32)
        tables = [build_tables(q)]
        n = 100_000
        u = rng.choices(d.symbols, weights=d.counts, k=n)
        v, _ = dtans_encode(u, tables, TOY)
        emp = SymbolDistribution.from_sequence(u)
        hq = cross_entropy(emp, q)
        slack = (TOY.l * math.log2(TOY.k) - TOY.o * math.log2(TOY.w)) / TOY.l
        assert len(v.words) * TOY.w_log2 / n <= hq + slack + 0.2

    def test_compression_bounded_by_cross_entropy_full_words(self):
        rng = random.Random(7)
        d = SymbolDistribution.from_counts({"a": 1, "b": 5, "c": 4})
        q = quantize(d, k=4096, m=256, raw_width_bits=32)
        tables = [build_tables(q)]
        n = 100_000
        u = rng.choices(d.symbols, weights=d.counts, k=n)
        v, _ = dtans_encode(u, tables, PROD)
        emp = SymbolDistribution.from_sequence(u)
        hq = cross_entropy(emp, q)
        bits_per_symbol = len(v.words) * PROD.w_log2 / n
        assert bits_per_symbol <= hq + 0.1
        assert bits_per_symbol >= entropy(emp) - 1e-9
