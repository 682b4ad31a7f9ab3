"""Shared builders for container and acceptance tests."""

import numpy as np

from csrdtans.sparse import CooMatrix, CsrMatrix, coo_to_csr


def random_csr(rng, max_rows=256, max_nnz=10_000, precision=8) -> CsrMatrix:
    """Random CSR with mixed row-length skew and mixed value styles."""
    rows = rng.randint(1, max_rows)
    cols = rng.randint(1, 512)
    style = rng.choice(["uniform", "skewed", "banded", "sparse"])
    budget = rng.randint(0, max_nnz)
    row_sets = []
    total = 0
    for i in range(rows):
        if total >= budget:
            row_sets.append(())
            continue
        if style == "uniform":
            k = rng.randint(0, min(cols, 8))
        elif style == "skewed":
            k = min(cols, int(rng.paretovariate(1.0))) if rng.random() < 0.4 else 0
        elif style == "banded":
            k = min(cols, rng.randint(1, 6))
        else:
            k = 1 if rng.random() < 0.3 else 0
        k = min(k, budget - total, cols)
        if k <= 0:
            row_sets.append(())
            continue
        if style == "banded":
            start = rng.randint(0, cols - k)
            cset = tuple(range(start, start + k))
        else:
            cset = tuple(sorted(rng.sample(range(cols), k)))
        row_sets.append(cset)
        total += k

    value_style = rng.choice(["discrete", "random", "mixed", "special"])
    dtype = np.float64 if precision == 8 else np.float32
    pool = [0.5, -1.0, 2.25, 3.0, 1e-3]
    special = [0.0, -0.0, float("inf"), float("-inf"), 1.5]
    r_idx, c_idx, vals = [], [], []
    for i, cset in enumerate(row_sets):
        for c in cset:
            r_idx.append(i)
            c_idx.append(c)
            if value_style == "discrete":
                vals.append(rng.choice(pool))
            elif value_style == "random":
                vals.append(rng.gauss(0, 1))
            elif value_style == "special":
                vals.append(rng.choice(special))
            else:
                vals.append(rng.choice(pool) if rng.random() < 0.7
                            else rng.gauss(0, 1))
    coo = CooMatrix(
        rows, cols,
        np.array(r_idx, dtype=np.int64),
        np.array(c_idx, dtype=np.int64),
        np.array(vals, dtype=dtype),
    )
    return coo_to_csr(coo)


def banded_matrix(rows, band, dtype=np.float64, value_pool=None, seed=0):
    """Row-regular banded matrix; compressible deltas and values."""
    rng = np.random.default_rng(seed)
    cols = rows
    r_idx, c_idx = [], []
    for i in range(rows):
        lo = max(0, i - band // 2)
        hi = min(cols, lo + band)
        for c in range(lo, hi):
            r_idx.append(i)
            c_idx.append(c)
    n = len(r_idx)
    if value_pool is None:
        vals = rng.standard_normal(n)
    else:
        vals = rng.choice(np.asarray(value_pool, dtype=dtype), size=n)
    coo = CooMatrix(rows, cols, np.array(r_idx), np.array(c_idx),
                    vals.astype(dtype))
    return coo_to_csr(coo)
