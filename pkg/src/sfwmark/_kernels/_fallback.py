"""Pure numpy versions of the compiled kernels (same signatures, same tie rules)."""
import numpy as np

# Rows of the pool processed per block; bounds the temporary to ~block*n doubles.
_BLOCK = 512


def l1_rows(query, refs):
    query = np.ascontiguousarray(query, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    if query.shape[0] != refs.shape[1]:
        raise ValueError(f"query length {query.shape[0]} != reference length {refs.shape[1]}")
    out = np.empty(refs.shape[0], dtype=np.float64)
    for start in range(0, refs.shape[0], _BLOCK):
        block = refs[start:start + _BLOCK]
        out[start:start + block.shape[0]] = np.abs(block - query).sum(axis=1)
    return out


def l1_argmin(queries, refs):
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    if refs.shape[0] == 0:
        raise ValueError("empty reference pool")
    idx = np.empty(queries.shape[0], dtype=np.int64)
    dist = np.empty(queries.shape[0], dtype=np.float64)
    for q, query in enumerate(queries):
        d = l1_rows(query, refs)
        # np.argmin returns the first minimum, i.e. the lowest index on ties
        k = int(np.argmin(d))
        idx[q] = k
        dist[q] = d[k]
    return idx, dist
