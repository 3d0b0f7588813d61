import math

import numpy as np
import pytest
from scipy import ndimage

from rootpipe.graph import build_graph, classify_main
from rootpipe.tracking import Detection

from oracles import draw_line

SHAPE = (120, 120)


def t_fixture(shape=SHAPE):
    """Vertical trunk x=50, y=0..99 with a horizontal arm at y=30 out to x=80."""
    return draw_line(shape, (50, 0), (50, 99)) | draw_line(shape, (50, 30), (80, 30))


def y_fixture(shape=SHAPE):
    """Stem 40 px down, then two 45 degree arms of 30 diagonal steps."""
    return (
        draw_line(shape, (50, 0), (50, 40))
        | draw_line(shape, (50, 40), (20, 70))
        | draw_line(shape, (50, 40), (80, 70))
    )


def loop_fixture(shape=SHAPE):
    """Tail into a 20x20 square loop, with a tail leaving its bottom side."""
    img = draw_line(shape, (50, 0), (50, 20))
    for a, b in (((40, 20), (60, 20)), ((60, 20), (60, 40)), ((60, 40), (40, 40)), ((40, 40), (40, 20))):
        img |= draw_line(shape, a, b)
    return img | draw_line(shape, (50, 40), (50, 70))


FIXTURES = {
    # name: (skeleton, seed, nodes, edges, geometric length px)
    "T": (t_fixture, (50, 0), 4, 3, 99 + 30),
    "Y": (y_fixture, (50, 0), 4, 3, 40 + 60 * math.sqrt(2)),
    "loop": (loop_fixture, (50, 0), 4, 4, 20 + 80 + 30),
}


def thicken(skel, radius=1):
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return ndimage.binary_dilation(skel, structure=(x**2 + y**2) <= radius**2)


def random_tree(rng, shape=(140, 140)):
    """Vertical trunk with non-touching horizontal laterals; returns (skeleton, lateral lengths)."""
    x0 = shape[1] // 2
    img = draw_line(shape, (x0, 0), (x0, 120))
    lengths = []
    rows = sorted(rng.choice(np.arange(5, 115, 4), size=int(rng.integers(0, 8)), replace=False).tolist())
    for k, y in enumerate(rows):
        length = int(rng.integers(1, 50))
        side = 1 if k % 2 == 0 else -1
        img |= draw_line(shape, (x0, y), (x0 + side * length, y))
        lengths.append(length)
    return img, lengths


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def static_field(rng, n_seeds=100, n_frames=300, jitter_px=1.0, dropouts=()):
    """Detections of a stationary seed grid with uniform jitter.

    ``dropouts`` holds ``(seed, first_frame, n_frames)`` occlusions. Returns
    the per-frame detections and, per frame, the seed index of each detection.
    """
    side = int(np.ceil(np.sqrt(n_seeds)))
    centres = [(40.0 + 60.0 * (i % side), 40.0 + 50.0 * (i // side)) for i in range(n_seeds)]
    hidden = {(s, f) for s, f0, k in dropouts for f in range(f0, f0 + k)}
    frames, owners = [], []
    for f in range(n_frames):
        dets, who = [], []
        shift = rng.uniform(-jitter_px, jitter_px, size=(n_seeds, 2))
        for i, (cx, cy) in enumerate(centres):
            if (i, f) in hidden:
                continue
            dets.append(Detection((cx + shift[i, 0], cy + shift[i, 1], 12.0, 10.0), 100, frozenset({1})))
            who.append(i)
        frames.append(dets)
        owners.append(who)
    return frames, owners


def random_classified_graph(rng):
    """A classified graph of a random tree at a random non-round calibration."""
    skel, _ = random_tree(rng)
    mpp = float(rng.uniform(0.01, 0.1))
    return classify_main(build_graph(skel, (skel.shape[1] // 2, 0), mpp))


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
