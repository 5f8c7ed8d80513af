import numpy as np

from pathbv.rng import PURPOSE_BRIDGE as BRIDGE, PURPOSE_PATHS as PATHS, block_normals, stream


def test_stream_is_deterministic():
    a = stream(7, 3, PATHS).standard_normal(5)
    b = stream(7, 3, PATHS).standard_normal(5)
    assert np.array_equal(a, b)


def test_streams_differ_by_index_and_purpose():
    a = stream(7, 3, PATHS).standard_normal(5)
    assert not np.array_equal(a, stream(7, 4, PATHS).standard_normal(5))
    assert not np.array_equal(a, stream(7, 3, BRIDGE).standard_normal(5))
    assert not np.array_equal(a, stream(8, 3, PATHS).standard_normal(5))


def test_block_normals_independent_of_chunking():
    full = block_normals(11, 600, (4,))
    parts = np.concatenate([block_normals(11, 100, (4,), first_item=0),
                            block_normals(11, 300, (4,), first_item=100),
                            block_normals(11, 200, (4,), first_item=400)])
    assert np.array_equal(full, parts)
