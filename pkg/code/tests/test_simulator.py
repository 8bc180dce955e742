import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)) + '/../')

from itertools import combinations
from math import sqrt

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError
from scipy import stats

from enums import Container, SimMode
from exceptions import RankRangeError
from models import LevelSpec, PixelMask
from schemas import SimConfig
from services.centroid_service import detect_spots
from services.frame_service import load_frame
from services.simulator_service import (
    gen_oracle_frame,
    gen_speckle_frame,
    gen_uniform_centroid_set,
    write_frames,
)


def test_no_spots_no_noise_gives_zero_frame():
    frame, spots = gen_speckle_frame(SimConfig(width=32, height=24, spot_count_mean=0), 0)
    assert spots == []
    assert not frame.samples.any()


def test_frames_are_deterministic():
    config = SimConfig(width=80, height=60, background_noise_sigma=3.0, seed=2**63 + 5)
    first, first_spots = gen_speckle_frame(config, 4)
    second, second_spots = gen_speckle_frame(config, 4)
    assert first == second
    assert first_spots == second_spots
    assert gen_speckle_frame(config, 5)[0] != first


def test_seed_changes_frames():
    a, _ = gen_speckle_frame(SimConfig(width=64, height=64, seed=1), 0)
    b, _ = gen_speckle_frame(SimConfig(width=64, height=64, seed=2), 0)
    assert a != b


def test_spot_count_follows_poisson_mean():
    config = SimConfig(width=48, height=48, spot_count_mean=50, seed=3)
    counts = [len(gen_speckle_frame(config, i)[1]) for i in range(1000)]
    assert abs(np.mean(counts) - 50) < 3 * sqrt(50 / 1000)


def test_planted_peaks_within_intensity_range():
    config = SimConfig(width=64, height=64, spot_count_mean=30, intensity_min=150, intensity_max=200, seed=4)
    _, spots = gen_speckle_frame(config, 0)
    assert all(150 <= s.peak <= 200 for s in spots)
    assert all(0 <= s.cx < 64 and 0 <= s.cy < 64 for s in spots)


def test_planted_truth_recovered_with_noise():
    rng = np.random.default_rng(6)
    planted = [
        (20 + 40 * i + rng.uniform(-2, 2), 20 + 40 * j + rng.uniform(-2, 2), int(rng.integers(180, 256)))
        for i in range(6) for j in range(6)
    ]
    config = SimConfig(width=256, height=256, spot_sigma=1.5, background_noise_sigma=5.0, seed=6)
    frame, truth = gen_speckle_frame(config, 0, planted=planted)
    spots = detect_spots(frame, PixelMask.full(256, 256), LevelSpec.equal_width(1, 64, 8))

    recovered = 0
    for spot in truth:
        distances = [np.hypot(s.centroid_x - spot.cx, s.centroid_y - spot.cy) for s in spots]
        if distances and min(distances) < 1.0:
            recovered += 1
    assert recovered / len(truth) >= 0.99


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(spot_sigma=0)
    with pytest.raises(ValidationError):
        SimConfig(intensity_min=200, intensity_max=100)
    with pytest.raises(ValidationError):
        SimConfig(bit_depth=8, intensity_max=300)
    with pytest.raises(ValidationError):
        SimConfig(seed=2**64)
    with pytest.raises(ValidationError):
        SimConfig(colour=True)


def test_full_subset():
    assert gen_uniform_centroid_set(7, 7, 0).occupied == tuple(range(1, 8))
    assert gen_uniform_centroid_set(7, 0, 0).occupied == ()


def test_subset_larger_than_grid():
    with pytest.raises(RankRangeError):
        gen_uniform_centroid_set(3, 4, 0)


def test_uniform_subsets():
    rng = np.random.default_rng(10)
    subsets = list(combinations(range(1, 6), 2))
    counts = dict.fromkeys(subsets, 0)
    for _ in range(10**5):
        counts[gen_uniform_centroid_set(5, 2, rng).occupied] += 1
    assert sum(counts.values()) == 10**5
    assert stats.chisquare(list(counts.values())).pvalue > 0.001
    sigma = sqrt(10**5 * 0.1 * 0.9)
    assert all(abs(c - 10**4) < 4 * sigma for c in counts.values())


def test_uniform_subset_of_huge_grid():
    centroid_set = gen_uniform_centroid_set(10**12, 100, 1)
    assert centroid_set.n_f == 100
    assert centroid_set.occupied[-1] <= 10**12


def test_oracle_frames():
    config = SimConfig(mode=SimMode.ORACLE, urn_count=891000, spot_count_mean=1600, seed=9)
    first = gen_oracle_frame(config, 0)
    assert first == gen_oracle_frame(config, 0)
    assert first != gen_oracle_frame(config, 1)
    assert first.urn_count == 891000
    assert abs(first.n_f - 1600) < 5 * sqrt(1600)


def test_oracle_frame_capped_at_grid():
    config = SimConfig(mode=SimMode.ORACLE, urn_count=10, spot_count_mean=50)
    assert gen_oracle_frame(config, 0).occupied == tuple(range(1, 11))


def test_oracle_defaults_to_pixel_grid():
    assert SimConfig(width=20, height=10).oracle_urn_count == 200


def test_write_frames(tmp_path):
    config = SimConfig(width=40, height=30, spot_count_mean=5, frame_count=3, seed=12)
    paths = write_frames(config, str(tmp_path), Container.PGM)
    assert [os.path.basename(p) for p in paths] == ["frame_00000.pgm", "frame_00001.pgm", "frame_00002.pgm"]
    for index, path in enumerate(paths):
        assert load_frame(path, 8, index) == gen_speckle_frame(config, index)[0]

    truth = pd.read_csv(tmp_path / "ground_truth.csv")
    assert list(truth.columns) == ["frame", "cx", "cy", "peak"]
    expected = sum(len(gen_speckle_frame(config, i)[1]) for i in range(3))
    assert len(truth) == expected


def test_write_frames_needs_speckle_mode(tmp_path):
    with pytest.raises(ValueError):
        write_frames(SimConfig(mode=SimMode.ORACLE), str(tmp_path))
