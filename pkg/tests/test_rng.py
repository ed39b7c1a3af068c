import numpy as np
from hypothesis import given, strategies as st
from scipy.special import ndtri as scipy_ndtri

from chartbench import rng


def test_philox_known_answers():
    # Random123 reference vectors for Philox4x32-10
    assert rng.philox4x32(0, 0, 0, 0, 0, 0) == (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)
    m = 0xFFFFFFFF
    assert rng.philox4x32(m, m, m, m, m, m) == (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)
    out = rng.philox4x32(0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344, 0xA4093822, 0x299F31D0)
    assert out == (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)


@given(st.floats(min_value=1e-300, max_value=1 - 1e-16, exclude_max=True))
def test_ndtri_matches_scipy(p):
    assert np.isclose(rng.ndtri(p), scipy_ndtri(p), rtol=1e-13, atol=1e-13)


def test_normals_are_pure_functions_of_seed_rep_time():
    a = rng.normals(np.uint64(11), 5, 300)
    b = rng.normals(np.uint64(11), 5, 500)
    np.testing.assert_array_equal(a, b[:300])
    assert not np.array_equal(a, rng.normals(np.uint64(11), 6, 300))
    assert not np.array_equal(a, rng.normals(np.uint64(12), 5, 300))


def test_normals_moments():
    z = np.concatenate([rng.normals(np.uint64(3), r, 1000) for r in range(200)])
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
