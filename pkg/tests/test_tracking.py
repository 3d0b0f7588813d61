import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import static_field
from oracles import brute_force_assignment_cost
from rootpipe.assignment import linear_sum_assignment
from rootpipe.tracking import (
    Detection, GroupSpec, KalmanTrack, SortTracker, TrackSnapshot, associate, detect, quality_control,
    run_tracking, validate_groups,
)


def test_detect_empty():
    assert detect(np.zeros((20, 20), dtype=np.uint8)) == []


def test_detect_two_blobs():
    labels = np.zeros((30, 40), dtype=np.uint8)
    labels[5:7, 5:10] = 5  # 10 px, centre (7.5, 6.0)
    labels[20:25, 30:32] = 1  # 10 px, centre (31.0, 22.5)
    dets = sorted(detect(labels, min_area_px=10), key=lambda d: d.bbox[0])
    assert [d.bbox for d in dets] == [(7.5, 6.0, 5.0, 2.0), (31.0, 22.5, 2.0, 5.0)]
    assert [d.centroid for d in dets] == [(7.5, 6.0), (31.0, 22.5)]
    assert [d.classes_present for d in dets] == [frozenset({5}), frozenset({1})]
    for d in dets:
        assert d.area_px <= d.bbox[2] * d.bbox[3]


def test_detect_small_blob_excluded():
    labels = np.zeros((10, 10), dtype=np.uint8)
    labels[2:4, 2:4] = 5
    assert detect(labels, min_area_px=10) == []


def test_predict_zero_velocity_and_constant_velocity():
    t = KalmanTrack.from_detection(0, (10.0, 20.0, 4.0, 5.0))
    t.predict()
    assert t.state[:2].tolist() == [10.0, 20.0]
    t.state[4] = 2.0
    t.predict()
    assert t.state[0] == pytest.approx(12.0)
    assert t.time_since_update == 2


def test_predict_grows_covariance_trace():
    t = KalmanTrack.from_detection(0, (10.0, 20.0, 4.0, 5.0))
    t.update((10.5, 20.0, 4.0, 5.0))
    before = np.trace(t.covariance)
    t.predict()
    assert np.trace(t.covariance) > before


def test_update_with_predicted_measurement_keeps_mean():
    t = KalmanTrack.from_detection(0, (10.0, 20.0, 4.0, 5.0))
    t.state[4:6] = [1.0, -0.5]
    t.predict()
    mean = t.state.copy()
    t.update(t.bbox())
    assert np.allclose(t.state, mean, atol=1e-9)


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=30))
@settings(max_examples=50, deadline=None)
def test_covariance_stays_symmetric_psd(noise):
    t = KalmanTrack.from_detection(0, (50.0, 50.0, 10.0, 8.0))
    for dx, dy in noise:
        t.predict()
        t.update((50.0 + dx, 50.0 + dy, 10.0, 8.0))
        assert np.allclose(t.covariance, t.covariance.T)
        assert np.linalg.eigvalsh((t.covariance + t.covariance.T) / 2).min() > -1e-8
        assert t.bbox()[3] > 0


def test_associate_obvious():
    ious = np.array([[0.0, -1.0], [-1.0, 0.0]])  # 1 - IoU = [[1,2],[2,1]]
    rows, cols = linear_sum_assignment(1.0 - ious)
    assert list(zip(rows.tolist(), cols.tolist())) == [(0, 0), (1, 1)]
    assert (1.0 - ious)[rows, cols].sum() == 2.0


def test_associate_zero_tracks():
    assert associate([], [(1, 1, 2, 2), (5, 5, 2, 2)]) == ([], [], [0, 1])


def test_associate_breaks_low_iou_pairs():
    matches, ut, ud = associate([(0, 0, 2, 2)], [(1.5, 0, 2, 2)], 0.3)  # IoU 1/7
    assert matches == [] and ut == [0] and ud == [0]


def test_assignment_5x5_brute_force(rng):
    for _ in range(20):
        cost = 1.0 - rng.random((5, 5))
        rows, cols = linear_sum_assignment(cost)
        assert cost[rows, cols].sum() == pytest.approx(brute_force_assignment_cost(cost), abs=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_assignment_rectangular_oracle(n_r, n_c, seed):
    cost = np.random.default_rng(seed).integers(-20, 20, size=(n_r, n_c)).astype(float)
    rows, cols = linear_sum_assignment(cost)
    assert len(rows) == min(n_r, n_c) and len(set(cols.tolist())) == len(cols)
    assert cost[rows, cols].sum() == brute_force_assignment_cost(cost)


def test_first_frame_has_no_confirmed_tracks():
    tracker = SortTracker()
    assert tracker.step([Detection((10, 10, 4, 4), 16, frozenset({5}))], 0) == []


def identity_switches(history, owners, frames):
    """Seeds whose matched detections carried more than one track id."""
    ids = {}
    for s in history:
        if s.matched:
            seed = owners[s.frame][s.detection_index]
            ids.setdefault(seed, set()).add(s.track_id)
    return sum(len(v) > 1 for v in ids.values()), ids


def test_static_field_no_switches(rng):
    frames, owners = static_field(rng, n_seeds=30, n_frames=100, jitter_px=0.9)
    history = run_tracking(frames)
    switches, ids = identity_switches(history, owners, frames)
    assert switches == 0 and len(ids) == 30
    # after confirmation every frame maps seeds to tracks one-to-one
    for f in range(3, 100):
        snaps = [s for s in history if s.frame == f]
        assert len(snaps) == 30 and len({s.track_id for s in snaps}) == 30
    assert all(not q.flags for q in quality_control(history, mm_per_pixel=0.04).values())


def test_dropout_resumes_same_id(rng):
    frames, owners = static_field(rng, n_seeds=4, n_frames=30, dropouts=[(2, 10, 2)])
    history = run_tracking(frames, max_age=5)
    switches, ids = identity_switches(history, owners, frames)
    assert switches == 0
    tid = next(iter(ids[2]))
    coasting = [s for s in history if s.track_id == tid and not s.matched]
    assert [s.frame for s in coasting] == [10, 11]


def test_dropout_longer_than_max_age_gets_new_id(rng):
    frames, owners = static_field(rng, n_seeds=1, n_frames=30, dropouts=[(0, 10, 8)])
    history = run_tracking(frames, max_age=5)
    assert len({s.track_id for s in history}) == 2


def test_track_ids_never_reused(rng):
    frames, _ = static_field(rng, n_seeds=3, n_frames=40, dropouts=[(0, 5, 10), (0, 20, 10), (1, 8, 9)])
    tracker = SortTracker(max_age=3)
    seen_ids = []
    for f, dets in enumerate(frames):
        tracker.step(dets, f)
        for t in tracker.tracks:
            if t.id not in seen_ids:
                seen_ids.append(t.id)
    assert seen_ids == sorted(seen_ids) and len(seen_ids) == len(set(seen_ids))


def snap(frame, tid, cx, cy, w=10.0, h=10.0):
    return TrackSnapshot(frame, tid, (cx, cy, w, h), True, 0)


def test_qc_touching_for_ten_frames():
    history = []
    for f in range(20):
        history.append(snap(f, 0, 50.0, 50.0))
        history.append(snap(f, 1, 56.0 if 5 <= f < 15 else 80.0, 50.0))
    flags = quality_control(history, touch_frames=4, v_max_mm=100.0)
    assert flags[0].touching_from == 5 and flags[1].touching_from == 5
    assert flags[0].excluded_from == 5


def test_qc_brief_contact_not_flagged():
    history = []
    for f in range(20):
        history.append(snap(f, 0, 50.0, 50.0))
        history.append(snap(f, 1, 56.0 if 5 <= f < 8 else 80.0, 50.0))
    assert all(not q.flags for q in quality_control(history, touch_frames=4, v_max_mm=100.0).values())


def test_qc_isolated_stationary_track():
    flags = quality_control([snap(f, 7, 50.0, 50.0) for f in range(10)])
    assert not flags[7].flags


def test_qc_single_jump():
    history = [snap(f, 0, 50.0 if f < 6 else 100.0, 50.0) for f in range(10)]
    flags = quality_control(history, mm_per_pixel=0.2, v_max_mm=1.0)  # 5 px per frame
    assert flags[0].abnormal_motion_from == 6 and flags[0].flags == {"abnormal_motion"}


def test_groups_overlap_rejected():
    a = GroupSpec("A", (0, 0, 100, 100))
    b = GroupSpec("B", (50, 50, 100, 100))
    c = GroupSpec("C", (100, 0, 100, 100))
    with pytest.raises(ValueError):
        validate_groups([a, b])
    validate_groups([a, c])
    assert a.contains(10, 10) and not a.contains(150, 10)
