import numpy as np
import pytest

from latentplc import kernels


def brute_force_nearest(x, rows):
    # independent oracle: per-pair python loop over all rows
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        best, best_d = 0, np.inf
        for c in range(rows.shape[0]):
            d = float(np.dot(x[i] - rows[c], x[i] - rows[c]))
            if d < best_d:
                best, best_d = c, d
        out[i] = best
    return out


def test_nearest_matches_brute_force(rng):
    x = rng.normal(size=(200, 8))
    rows = rng.normal(size=(64, 8))
    assert np.array_equal(kernels.nearest_rows(x, rows), brute_force_nearest(x, rows))


def test_nearest_tie_breaks_to_lowest_index(rng):
    rows = rng.normal(size=(16, 4))
    rows[9] = rows[2]  # duplicate row: tie between 2 and 9
    x = rows[9][np.newaxis, :]
    assert kernels.nearest_rows(x, rows)[0] == 2


def test_backends_agree_bitwise(rng):
    if kernels.numba is None:
        pytest.skip("numba unavailable")
    x = rng.normal(size=(1000, 16))
    rows = rng.normal(size=(256, 16))
    i_np = kernels.nearest_rows_numpy(x, rows)
    i_nb = kernels.nearest_rows_numba(x, rows)
    assert np.array_equal(i_np, i_nb)
    c_np, s_np = kernels.scatter_accumulate_numpy(x, i_np, 256)
    c_nb, s_nb = kernels.scatter_accumulate_numba(x, i_nb, 256)
    assert np.array_equal(c_np, c_nb)
    assert np.array_equal(s_np, s_nb)


def test_scatter_accumulate_matches_loop(rng):
    x = rng.normal(size=(300, 5))
    idx = rng.integers(0, 32, size=300)
    counts, sums = kernels.scatter_accumulate(x, idx, 32)
    ref_counts = np.zeros(32)
    ref_sums = np.zeros((32, 5))
    for i in range(300):
        ref_counts[idx[i]] += 1
        ref_sums[idx[i]] += x[i]
    assert np.array_equal(counts, ref_counts)
    assert np.allclose(sums, ref_sums, atol=1e-12)


def test_shape_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        kernels.nearest_rows(rng.normal(size=(4, 3)), rng.normal(size=(8, 5)))
