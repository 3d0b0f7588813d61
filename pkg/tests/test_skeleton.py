import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from conftest import t_fixture, thicken
from oracles import draw_line
from rootpipe.skeleton import (
    _REMOVABLE, _ring_codes, degree_map, longest_path_px, path_length_px, prune_spurs, skeleton_length_px, thin,
)

EIGHT = np.ones((3, 3), bool)


def test_bar_thins_to_full_length_line():
    img = np.zeros((11, 30), bool)
    img[4:7, 4:24] = True
    skel = thin(img)
    assert abs(int(skel.sum()) - 20) <= 1
    assert len(np.unique(np.nonzero(skel)[0])) == 1


def test_empty_and_single_pixel():
    assert not thin(np.zeros((5, 5), bool)).any()
    one = np.zeros((5, 5), bool)
    one[2, 2] = True
    assert np.array_equal(thin(one), one)


def test_plain_line_unchanged_by_pruning():
    line = draw_line((50, 50), (10, 0), (10, 40))
    assert np.array_equal(prune_spurs(line), line)


def test_three_pixel_stub_removed():
    trunk = draw_line((120, 120), (50, 0), (50, 99))
    skel = trunk | draw_line((120, 120), (50, 50), (53, 50))
    assert np.array_equal(prune_spurs(skel, 5), trunk)


def test_ten_pixel_arm_kept():
    skel = draw_line((120, 120), (50, 0), (50, 99)) | draw_line((120, 120), (50, 50), (60, 50))
    assert np.array_equal(prune_spurs(skel, 5), skel)


def test_stub_threshold_is_exactly_five_pixels():
    trunk = draw_line((120, 120), (50, 0), (50, 99))
    for stub in range(1, 9):
        skel = trunk | draw_line((120, 120), (50, 50), (50 + stub, 50))
        pruned = prune_spurs(skel, 5)
        assert np.array_equal(pruned, trunk if stub < 5 else skel), stub


def test_step_lengths():
    assert path_length_px([(0, 0), (1, 1), (1, 2)]) == np.sqrt(2) + 1
    assert longest_path_px(t_fixture()) == 99.0


blobs = arrays(bool, (16, 16), elements=st.booleans())


def _components(img):
    return ndimage.label(img, EIGHT)[1], ndimage.label(~np.pad(img, 1))[1]


@given(blobs)
@settings(max_examples=150, deadline=None)
def test_thinning_preserves_topology_and_is_minimal(img):
    img = ndimage.binary_closing(img, EIGHT) | img
    skel = thin(img)
    assert not (skel & ~img).any()
    assert _components(skel) == _components(img)
    # fixed point: no simple non-end pixel remains
    assert not (skel & _REMOVABLE[_ring_codes(skel)]).any()
    assert np.array_equal(thin(skel), skel)


@given(blobs)
@settings(max_examples=80, deadline=None)
def test_prune_is_idempotent(img):
    once = prune_spurs(thin(img))
    assert np.array_equal(prune_spurs(once), once)


def test_thick_root_degrees():
    skel = prune_spurs(thin(thicken(t_fixture())))
    deg = degree_map(skel)[skel]
    assert (deg == 1).sum() == 3 and (deg >= 3).sum() == 1


def test_skeleton_length_counts_each_edge_once():
    square = draw_line((10, 10), (2, 2), (6, 2)) | draw_line((10, 10), (6, 2), (6, 6))
    assert skeleton_length_px(square) == 8.0
