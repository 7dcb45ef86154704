import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from lamarck_vsr.morphology import (InvalidGenome, MorphGenome, VoxelKind, is_connected,
                                    is_valid, mutate, mutate_once, random_init)

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def oracle_connected(occ):
    labels, n = ndimage.label(occ > 0, structure=FOUR_CONN)
    return n == 1


def test_connectivity_matches_labelling_on_every_3x3_pattern():
    for bits in range(1 << 9):
        sub = np.array([(bits >> i) & 1 for i in range(9)], dtype=np.int8).reshape(3, 3)
        for r0 in range(3):
            for c0 in range(3):
                grid = np.zeros((5, 5), dtype=np.int8)
                grid[r0:r0 + 3, c0:c0 + 3] = sub
                assert is_connected(grid) == oracle_connected(grid), (bits, r0, c0)


def test_diagonal_only_contact_is_disconnected():
    grid = np.zeros((5, 5), dtype=np.int8)
    grid[0, 0] = grid[1, 1] = 1
    assert not is_connected(grid)


def test_size_bounds():
    bar = MorphGenome.from_string("RRRR." + "." * 20)
    assert not is_valid(bar)
    assert is_valid(MorphGenome.from_string("RRRRR" + "." * 20))
    assert is_valid(MorphGenome.from_string("R" * 25))


def test_string_round_trip():
    text = "RSHV." * 5
    g = MorphGenome.from_string(text)
    assert g.to_string() == text
    assert g.grid[0, 2] == VoxelKind.HORIZONTAL
    assert g == MorphGenome.from_string(text)
    assert hash(g) == hash(MorphGenome.from_string(text))


def test_bad_strings_rejected():
    with pytest.raises(InvalidGenome):
        MorphGenome.from_string("R" * 24)
    with pytest.raises(InvalidGenome):
        MorphGenome.from_string("X" * 25)


def test_grid_is_read_only():
    g = MorphGenome.from_string("R" * 25)
    with pytest.raises(ValueError):
        g.grid[0, 0] = 0


def test_actuated_cells_row_major():
    g = MorphGenome.from_string("HRV.." "S.H.." + "." * 15)
    assert g.actuated_cells() == [(0, 0), (0, 2), (1, 2)]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_init_is_valid_and_in_size_range(seed):
    g = random_init(np.random.default_rng(seed))
    assert is_valid(g)
    assert 10 <= g.n_voxels <= 20


def test_random_init_deterministic():
    a = random_init(np.random.default_rng(42))
    b = random_init(np.random.default_rng(42))
    assert a == b


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mutation_closure(seed):
    rng = np.random.default_rng(seed)
    parent = random_init(rng)
    child = mutate(parent, rng)
    assert is_valid(child)
    assert np.count_nonzero(child.grid != parent.grid) <= 3


def test_change_edit_always_alters_kind():
    rng = np.random.default_rng(3)
    parent = MorphGenome.from_string("R" * 25)
    for _ in range(200):
        child = mutate_once(parent, rng, ops=["change"])
        assert np.count_nonzero(child.grid != parent.grid) == 1


def test_remove_below_minimum_is_rejected():
    parent = MorphGenome.from_string("RRRRR" + "." * 20)
    assert mutate_once(parent, np.random.default_rng(0), ops=["remove"]) is None


def test_exhausted_retries_return_parent(caplog):
    parent = MorphGenome.from_string("RRRRR" + "." * 20)
    with caplog.at_level(logging.WARNING):
        child = mutate(parent, np.random.default_rng(0), ops=["remove"])
    assert child is parent
    assert "retries exhausted" in caplog.text


def test_mutate_rejects_invalid_parent():
    with pytest.raises(InvalidGenome):
        mutate(MorphGenome.from_string("R.R.R.R" + "." * 18), np.random.default_rng(0))
