"""Entropy-coded sparse matrices.

Lossless tANS/dtANS entropy coding, a CSR-based compressed container with
warp-interleaved word streams, and sparse matrix-vector multiplication fused
with on-the-fly decoding, all on CPU with a 32-lane lockstep simulation.
"""

from .entropy import (
    ESCAPE,
    Bits,
    CodingError,
    CodingTables,
    CorruptStream,
    ParameterError,
    QuantizedDistribution,
    SymbolDistribution,
    TansParams,
    build_tables,
    cross_entropy,
    entropy,
    quantize,
    tans_decode,
    tans_encode,
)
from .codec import (
    DecodeTrace,
    DecoderState,
    DtansParams,
    SegmentTrace,
    WordStream,
    accumulate,
    dtans_decode,
    dtans_encode,
    extract_word,
    pack,
    unpack,
    validate_params,
)
from .sparse import (
    CooMatrix,
    CsrMatrix,
    MtxFormatError,
    SellMatrix,
    build_symbol_streams,
    coo_to_csr,
    csr_to_sell,
    delta_decode_row,
    delta_encode_row,
    format_size_bytes,
    gen_graph,
    index_entropy_ratio,
    parse_mtx,
    reference_spmv,
)
from .container import (
    CsrDtansContainer,
    LockstepSchedule,
    decode_matrix,
    deinterleave_warp,
    deserialize,
    encode_matrix,
    interleave_warp,
    serialize,
    size_bytes,
    spmv,
)

__version__ = "0.1.0"
