"""Sparse matrix formats, delta-encoded index streams, and generators.

COO is the ingestion format (MatrixMarket), CSR the canonical in-memory
representation, and SELL a sliced-ELLPACK model used only for byte-size
accounting.  Column indices are delta-encoded per row before entropy coding;
values are treated as raw bit patterns so the coding pipeline stays lossless.
The sequential SpMVM here is the bitwise oracle for the fused kernel: each
row accumulates value * x[col] strictly left to right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .entropy import ParameterError


class MtxFormatError(ValueError):
    """Malformed or unsupported MatrixMarket content."""


# ---------------------------------------------------------------------------
# Formats


@dataclass
class CooMatrix:
    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    def validate(self) -> None:
        if not (len(self.row_idx) == len(self.col_idx) == len(self.values)):
            raise ParameterError("COO arrays must have equal length")
        if self.nnz and (
            self.row_idx.min() < 0
            or self.row_idx.max() >= self.rows
            or self.col_idx.min() < 0
            or self.col_idx.max() >= self.cols
        ):
            raise ParameterError("COO index out of range")


@dataclass
class CsrMatrix:
    rows: int
    cols: int
    row_start: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def value_width(self) -> int:
        return self.values.dtype.itemsize

    def row_cols(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_start[i] : self.row_start[i + 1]]

    def row_values(self, i: int) -> np.ndarray:
        return self.values[self.row_start[i] : self.row_start[i + 1]]

    def validate(self) -> None:
        if len(self.row_start) != self.rows + 1:
            raise ParameterError("row_start must have rows + 1 entries")
        if self.row_start[0] != 0 or self.row_start[-1] != self.nnz:
            raise ParameterError("row_start must span [0, nnz]")
        if np.any(np.diff(self.row_start) < 0):
            raise ParameterError("row_start must be nondecreasing")
        if self.nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.cols:
                raise ParameterError("column index out of range")
            deltas = np.diff(self.col_idx)
            starts = self.row_start[1:-1]
            inner = np.ones(self.nnz - 1, dtype=bool)
            inner[starts[(starts > 0) & (starts < self.nnz)] - 1] = False
            if np.any(deltas[inner] <= 0):
                raise ParameterError("columns must be strictly ascending per row")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.row_start, other.row_start)
            and np.array_equal(self.col_idx, other.col_idx)
            and self.values.dtype == other.values.dtype
            and np.array_equal(
                self.values.view(np.uint64 if self.value_width == 8 else np.uint32),
                other.values.view(np.uint64 if self.value_width == 8 else np.uint32),
            )
        )


@dataclass
class SellMatrix:
    """Sliced ELLPACK: groups of ``slice_height`` rows padded to the widest
    row in the group and stored column major.  Padding carries column 0 and
    value 0 so it contributes nothing to SpMVM."""

    rows: int
    cols: int
    slice_height: int
    widths: np.ndarray
    offsets: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    pad: np.ndarray

    @property
    def nslices(self) -> int:
        return len(self.widths)

    @property
    def padded_cells(self) -> int:
        return int(self.offsets[-1])


def coo_to_csr(m: CooMatrix) -> CsrMatrix:
    """Sort by (row, col) and compress; duplicate coordinates are rejected."""
    m.validate()
    order = np.lexsort((m.col_idx, m.row_idx))
    r = np.asarray(m.row_idx)[order]
    c = np.asarray(m.col_idx)[order]
    v = np.asarray(m.values)[order]
    if len(r) > 1 and np.any((np.diff(r) == 0) & (np.diff(c) == 0)):
        raise MtxFormatError("duplicate (row, col) entry")
    row_start = np.zeros(m.rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=m.rows), out=row_start[1:])
    return CsrMatrix(m.rows, m.cols, row_start, c.astype(np.int64), v)


def _sell_widths(m: CsrMatrix, slice_height: int) -> np.ndarray:
    nnz_row = np.diff(m.row_start)
    nslices = max(1, -(-m.rows // slice_height)) if m.rows else 1
    widths = np.zeros(nslices, dtype=np.int64)
    for s in range(nslices):
        lo, hi = s * slice_height, min((s + 1) * slice_height, m.rows)
        if hi > lo:
            widths[s] = nnz_row[lo:hi].max()
    return widths


def csr_to_sell(m: CsrMatrix, slice_height: int = 32) -> SellMatrix:
    if slice_height < 1:
        raise ParameterError("slice_height must be >= 1")
    nnz_row = np.diff(m.row_start)
    widths = _sell_widths(m, slice_height)
    nslices = len(widths)
    offsets = np.zeros(nslices + 1, dtype=np.int64)
    np.cumsum(widths * slice_height, out=offsets[1:])
    total = int(offsets[-1])
    cols = np.zeros(total, dtype=np.int64)
    vals = np.zeros(total, dtype=m.values.dtype)
    pad = np.ones(total, dtype=bool)
    for s in range(nslices):
        w = int(widths[s])
        for i in range(slice_height):
            row = s * slice_height + i
            if row >= m.rows:
                break
            k = int(nnz_row[row])
            # column-major within the slice: cell (i, c) at offset + c*height + i
            cells = offsets[s] + np.arange(k) * slice_height + i
            cols[cells] = m.row_cols(row)
            vals[cells] = m.row_values(row)
            pad[cells] = False
    return SellMatrix(m.rows, m.cols, slice_height, widths, offsets, cols, vals, pad)


def format_size_bytes(m: CsrMatrix, fmt: str, value_width: int) -> int:
    """Byte size of ``m`` in a baseline format with 4-byte indices."""
    if value_width not in (4, 8):
        raise ParameterError("value_width must be 4 or 8 bytes")
    fmt = fmt.lower()
    if fmt == "coo":
        return m.nnz * (4 + 4 + value_width)
    if fmt == "csr":
        return m.nnz * (4 + value_width) + 4 * (m.rows + 1)
    if fmt == "sell":
        widths = _sell_widths(m, 32)
        padded_cells = int(widths.sum()) * 32
        return padded_cells * (4 + value_width) + 4 * (len(widths) + 1)
    raise ParameterError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# MatrixMarket


def parse_mtx(text: str) -> CooMatrix:
    """Parse MatrixMarket coordinate content.

    Supports real/integer/pattern fields and general/symmetric symmetry;
    symmetric off-diagonal entries are mirrored, pattern entries get value 1.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise MtxFormatError("missing %%MatrixMarket banner")
    banner = lines[0].split()
    if len(banner) != 5:
        raise MtxFormatError(f"malformed banner: {lines[0]!r}")
    _, obj, layout, fieldtype, symmetry = (tok.lower() for tok in banner)
    if obj != "matrix":
        raise MtxFormatError(f"unsupported object {obj!r}")
    if layout != "coordinate":
        raise MtxFormatError(f"unsupported layout {layout!r} (coordinate only)")
    if fieldtype not in ("real", "integer", "pattern"):
        raise MtxFormatError(f"unsupported field {fieldtype!r}")
    if symmetry not in ("general", "symmetric"):
        raise MtxFormatError(f"unsupported symmetry {symmetry!r}")

    data = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not data:
        raise MtxFormatError("missing size line")
    size = data[0].split()
    if len(size) != 3:
        raise MtxFormatError(f"malformed size line: {data[0]!r}")
    try:
        rows, cols, nnz = (int(tok) for tok in size)
    except ValueError as e:
        raise MtxFormatError(f"malformed size line: {data[0]!r}") from e
    if rows < 0 or cols < 0 or nnz < 0:
        raise MtxFormatError("negative dimensions")
    if len(data) - 1 != nnz:
        raise MtxFormatError(f"expected {nnz} entries, found {len(data) - 1}")

    tok_per_line = 2 if fieldtype == "pattern" else 3
    tokens = " ".join(data[1:]).split()
    if len(tokens) != nnz * tok_per_line:
        raise MtxFormatError("entry lines have the wrong number of fields")
    try:
        arr = np.array(tokens, dtype=np.float64).reshape(nnz, tok_per_line)
    except ValueError as e:
        raise MtxFormatError("non-numeric entry") from e
    r = arr[:, 0].astype(np.int64) - 1
    c = arr[:, 1].astype(np.int64) - 1
    if np.any(arr[:, 0] != r + 1) or np.any(arr[:, 1] != c + 1):
        raise MtxFormatError("non-integer index")
    v = arr[:, 2] if tok_per_line == 3 else np.ones(nnz, dtype=np.float64)
    if nnz and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
        raise MtxFormatError("index out of range")
    if symmetry == "symmetric":
        off = r != c
        r, c, v = (
            np.concatenate([r, c[off]]),
            np.concatenate([c, r[off]]),
            np.concatenate([v, v[off]]),
        )
    return CooMatrix(rows, cols, r, c, v)


# ---------------------------------------------------------------------------
# Delta encoding and symbol streams


def delta_encode_row(cols: Sequence[int]) -> np.ndarray:
    """First delta is the column itself; later deltas are raw differences."""
    cols = np.asarray(cols, dtype=np.int64)
    if len(cols) == 0:
        return cols
    d = np.empty_like(cols)
    d[0] = cols[0]
    d[1:] = np.diff(cols)
    if np.any(d[1:] <= 0) or d[0] < 0:
        raise ParameterError("columns must be strictly ascending")
    return d


def delta_decode_row(deltas: Sequence[int]) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=np.int64)
    return np.cumsum(deltas)


def matrix_deltas(m: CsrMatrix) -> np.ndarray:
    """Per-row delta encoding of column indices, flat and aligned with nnz."""
    if m.nnz == 0:
        return np.zeros(0, dtype=np.int64)
    d = np.empty(m.nnz, dtype=np.int64)
    d[0] = m.col_idx[0]
    d[1:] = np.diff(m.col_idx)
    starts = m.row_start[:-1]
    starts = starts[starts < m.nnz]
    d[starts] = m.col_idx[starts]
    return d


def value_patterns(values: np.ndarray) -> np.ndarray:
    """Raw bit patterns of the value array (lossless symbol domain)."""
    width = values.dtype.itemsize
    if width == 8:
        return np.ascontiguousarray(values).view(np.uint64)
    if width == 4:
        return np.ascontiguousarray(values).view(np.uint32)
    raise ParameterError(f"unsupported value width {width}")


def build_symbol_streams(m: CsrMatrix):
    """Per-row interleaved streams: (delta0, value0, delta1, value1, ...)."""
    deltas = matrix_deltas(m)
    out = []
    for i in range(m.rows):
        lo, hi = int(m.row_start[i]), int(m.row_start[i + 1])
        seq = []
        for p in range(lo, hi):
            seq.append(int(deltas[p]))
            seq.append(m.values[p].item())
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# Reference SpMVM


def reference_spmv(m: CsrMatrix, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """y' = m @ x + y with strictly sequential left-to-right row accumulation.

    This exact operation order (in the matrix's precision) is the bitwise
    oracle for SpMVM fused with decoding.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) != m.cols or len(y) != m.rows:
        raise ParameterError("dimension mismatch")
    dtype = m.values.dtype
    x = x.astype(dtype, copy=False)
    y = y.astype(dtype, copy=False)
    acc = np.zeros(m.rows, dtype=dtype)
    nnz_row = np.diff(m.row_start)
    order = np.argsort(-nnz_row, kind="stable")
    base = m.row_start[:-1][order]
    active = np.searchsorted(-nnz_row[order], -np.arange(1, nnz_row.max() + 1) if m.nnz else [], side="right")
    for q in range(int(nnz_row.max()) if m.nnz else 0):
        a = int(active[q])
        idx = base[:a] + q
        rows_q = order[:a]
        acc[rows_q] += m.values[idx] * x[m.col_idx[idx]]
    return acc + y


# ---------------------------------------------------------------------------
# Random graph models


_MODEL_ALIASES = {
    "er": "erdos_renyi",
    "erdos_renyi": "erdos_renyi",
    "ws": "watts_strogatz",
    "watts_strogatz": "watts_strogatz",
    "ba": "barabasi_albert",
    "barabasi_albert": "barabasi_albert",
}


def gen_graph(
    model: str,
    n: int,
    target_avg_degree: int,
    seed: int,
    ws_rewire: float = 0.1,
) -> CsrMatrix:
    """Random-graph adjacency as a pattern CSR matrix (both edge directions).

    erdos_renyi picks every edge with p = degree/(n-1); watts_strogatz uses a
    ring lattice of degree rounded down to even with rewiring probability
    ``ws_rewire``; barabasi_albert attaches degree//2 edges per new node.
    """
    import networkx as nx

    name = _MODEL_ALIASES.get(model.lower())
    if name is None:
        raise ParameterError(f"unknown graph model {model!r}")
    if n < 2 or target_avg_degree < 1:
        raise ParameterError("need n >= 2 and degree >= 1")
    if name == "erdos_renyi":
        p = target_avg_degree / (n - 1)
        if p > 1:
            raise ParameterError("degree too large for n")
        g = nx.fast_gnp_random_graph(n, p, seed=seed)
    elif name == "watts_strogatz":
        k = max(2, 2 * (target_avg_degree // 2))
        if k >= n:
            raise ParameterError("degree too large for n")
        g = nx.watts_strogatz_graph(n, k, ws_rewire, seed=seed)
    else:
        m_edges = max(1, target_avg_degree // 2)
        if m_edges >= n:
            raise ParameterError("degree too large for n")
        g = nx.barabasi_albert_graph(n, m_edges, seed=seed)

    edges = np.array(list(g.edges()), dtype=np.int64)
    if len(edges) == 0:
        coo = CooMatrix(n, n, np.zeros(0, np.int64), np.zeros(0, np.int64),
                        np.zeros(0, np.float64))
        return coo_to_csr(coo)
    r = np.concatenate([edges[:, 0], edges[:, 1]])
    c = np.concatenate([edges[:, 1], edges[:, 0]])
    coo = CooMatrix(n, n, r, c, np.ones(len(r), dtype=np.float64))
    return coo_to_csr(coo)


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    return float(math.log2(total) - (counts * np.log2(counts)).sum() / total)


def index_entropy_ratio(m: CsrMatrix) -> float:
    """Entropy of the delta symbols over the raw column-index entropy.

    Both distributions are taken over the whole matrix; a point-mass pair
    (single repeated symbol on both sides) is defined as ratio 1.
    """
    if m.nnz < 1:
        raise ParameterError("need at least one nonzero")
    _, raw_counts = np.unique(m.col_idx, return_counts=True)
    _, delta_counts = np.unique(matrix_deltas(m), return_counts=True)
    h_raw = _entropy_bits(raw_counts)
    h_delta = _entropy_bits(delta_counts)
    if h_raw == 0.0:
        return 1.0 if h_delta == 0.0 else math.inf
    return h_delta / h_raw
