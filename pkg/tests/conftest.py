import itertools

import numpy as np
import pytest

from lsconley.ls_system import set_threads


@pytest.fixture(autouse=True)
def _single_thread():
    set_threads(1)
    yield
    set_threads(1)


def brute_rank(dense) -> int:
    """Rank over Z2 from the size of the column span (enumerates all combinations)."""
    a = np.asarray(dense, dtype=np.uint8) % 2
    if a.size == 0:
        return 0
    cols = a.shape[1]
    image = set()
    for coeffs in itertools.product((0, 1), repeat=cols):
        image.add(tuple((a @ np.array(coeffs, dtype=np.int64)) % 2))
    return int(round(np.log2(len(image))))


def brute_homology(sizes, boundaries) -> dict:
    """dims_k = nullity(d_k) - rank(d_{k+1}) with both ranks brute-forced."""
    out = {}
    for k, n in sizes.items():
        if n == 0:
            continue
        dk = boundaries.get(k)
        r_k = brute_rank(dk) if dk is not None and dk.size else 0
        dk1 = boundaries.get(k + 1)
        r_k1 = brute_rank(dk1) if dk1 is not None and dk1.size else 0
        d = n - r_k - r_k1
        if d:
            out[k] = d
    return out
