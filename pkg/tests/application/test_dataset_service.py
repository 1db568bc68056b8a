"""
数据服务测试：移动图形、词序列、分批
"""
import math

import numpy as np
import pytest

from src.application.services.dataset_service import (
    DatasetService,
    ShapeMotion,
    ShapesConfig,
    cycle_points,
    gen_cyclic_tokens,
    gen_moving_shapes,
    make_batches,
    make_sprite,
    render_sequence,
    rotate_sprite,
    tokens_to_signals,
    trajectory,
)
from src.core.datasets import SequenceDataset, TokenDataset
from src.infrastructure.config.run_config import parse_run_config
from src.infrastructure.serialization import save_dataset
from src.shared.exceptions import DataError


class TestTrajectory:

    def test_reflects_at_border(self):
        path = trajectory((0, 0), (0, 1), sprite_size=2, patch=8, steps=9)
        cols = [c for _, c in path]
        assert cols[:9] == [0, 1, 2, 3, 4, 5, 6, 5, 4]
        assert cols[6] == 6 and cols[7] == 5

    def test_static_when_velocity_zero(self):
        assert set(trajectory((3, 2), (0, 0), 2, 8, 5)) == {(3, 2)}

    def test_sprite_filling_patch_stays_put(self):
        assert trajectory((0, 0), (1, 1), 4, 4, 3) == [(0, 0)] * 3

    def test_out_of_range_start(self):
        with pytest.raises(DataError):
            trajectory((0, 7), (0, 1), 2, 8, 3)

    def test_stays_inside_patch(self):
        for r, c in trajectory((1, 4), (3, -2), 3, 9, 40):
            assert 0 <= r <= 6 and 0 <= c <= 6


class TestSprites:

    def test_square_and_cross(self):
        assert make_sprite("square", 3).sum() == 9
        cross = make_sprite("cross", 3)
        assert cross.sum() == 5 and cross[1, 1] == 1 and cross[0, 0] == 0

    def test_glyph_is_binary_and_seeded(self):
        a = make_sprite("glyph", 4, np.random.default_rng(5))
        b = make_sprite("glyph", 4, np.random.default_rng(5))
        assert np.array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 1.0} and a.any()

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            make_sprite("circle", 3)

    def test_rotation_keeps_values_in_unit_interval(self):
        rotated = rotate_sprite(make_sprite("cross", 5), 0.7)
        assert rotated.shape == (5, 5)
        assert rotated.min() >= 0.0 and rotated.max() <= 1.0

    def test_zero_angle_is_identity(self):
        sprite = make_sprite("cross", 5)
        assert np.array_equal(rotate_sprite(sprite, 0.0), sprite)


class TestMovingShapes:

    def test_square_moves_one_column_per_frame(self):
        motion = ShapeMotion(np.ones((2, 2)), (0, 0), (0, 1))
        frames = render_sequence([motion], patch=8, steps=8)
        assert frames[6, 0:2, 6:8].sum() == 4
        assert frames[7, 0:2, 5:7].sum() == 4
        assert frames.sum(axis=(1, 2)).tolist() == [4.0] * 8

    def test_static_limit_repeats_first_frame(self):
        data = gen_moving_shapes(ShapesConfig(patch=8, sprite_size=2, min_speed=0, max_speed=0,
                                              seq_len=5, count=3, seed=1))
        for sequence in data.frames:
            for frame in sequence:
                assert np.array_equal(frame, sequence[0])

    def test_mass_is_conserved_without_overlap(self):
        data = gen_moving_shapes(ShapesConfig(patch=10, n_shapes=1, sprite_size=3, seq_len=12, count=4, seed=2))
        totals = data.frames.sum(axis=(2, 3))
        assert np.all(totals == 9.0)

    def test_shape_and_range(self):
        config = ShapesConfig(patch=6, sprite_size=2, seq_len=7, count=5, rotate=True, kind="cross", seed=3)
        data = gen_moving_shapes(config)
        assert data.frames.shape == (5, 7, 36, 1)
        assert data.frames.min() >= 0.0 and data.frames.max() <= 1.0

    def test_deterministic_for_seed(self):
        config = ShapesConfig(patch=8, sprite_size=2, seq_len=6, count=4, rotate=True, kind="glyph", seed=9)
        assert np.array_equal(gen_moving_shapes(config).frames, gen_moving_shapes(config).frames)
        other = ShapesConfig(patch=8, sprite_size=2, seq_len=6, count=4, rotate=True, kind="glyph", seed=10)
        assert not np.array_equal(gen_moving_shapes(config).frames, gen_moving_shapes(other).frames)

    def test_sprite_larger_than_patch(self):
        with pytest.raises(DataError):
            ShapesConfig(patch=4, sprite_size=5)

    def test_bad_speed_range(self):
        with pytest.raises(DataError):
            ShapesConfig(min_speed=3, max_speed=1)


class TestTokens:

    def test_one_hot_signals(self):
        signals = tokens_to_signals([2, 0, 2], 3)
        assert signals.shape == (3, 3, 1)
        np.testing.assert_array_equal(signals[:, :, 0], [[0, 0, 1], [1, 0, 0], [0, 0, 1]])

    def test_out_of_vocabulary(self):
        with pytest.raises(DataError):
            tokens_to_signals([0, 3], 3)

    def test_cycle(self):
        assert gen_cyclic_tokens(4, 6).ids.tolist() == [0, 1, 2, 3, 0, 1]
        assert gen_cyclic_tokens(4, 3, start=3).ids.tolist() == [3, 0, 1]

    def test_cycle_points_on_unit_circle(self):
        points = cycle_points(6)
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0)
        np.testing.assert_allclose(points[0], [1.0, 0.0])


class TestMakeBatches:

    def test_window_count_per_sequence(self):
        data = SequenceDataset(np.zeros((3, 21, 4, 1)))
        batches = make_batches(data, batch_size=8, unroll=20)
        assert len(batches) == 1
        assert batches[0].inputs.shape == (20, 3, 4, 1)

    def test_trailing_frames_dropped(self):
        data = SequenceDataset(np.zeros((1, 25, 2, 1)))
        assert sum(b.size for b in make_batches(data, 4, 6)) == 4

    def test_partial_last_batch(self):
        data = SequenceDataset(np.zeros((40, 21, 2, 1)))
        batches = make_batches(data, batch_size=20, unroll=20, seed=0)
        assert [b.size for b in batches] == [20, 20]
        assert [b.size for b in make_batches(data, 15, 20)] == [15, 15, 10]

    def test_targets_are_shifted_inputs(self):
        frames = np.arange(10, dtype=float).reshape(1, 10, 1, 1)
        batch = make_batches(SequenceDataset(frames), 1, 4)[0]
        np.testing.assert_array_equal(batch.inputs[:, 0, 0, 0], [0, 1, 2, 3])
        np.testing.assert_array_equal(batch.targets[:, 0, 0, 0], [1, 2, 3, 4])

    def test_same_seed_same_order(self):
        frames = np.random.default_rng(0).random((12, 5, 2, 1))
        data = SequenceDataset(frames)
        first = make_batches(data, 4, 4, seed=[7, 1])
        second = make_batches(data, 4, 4, seed=[7, 1])
        for a, b in zip(first, second):
            assert np.array_equal(a.inputs, b.inputs)
        unshuffled = make_batches(data, 12, 4)[0]
        np.testing.assert_array_equal(unshuffled.inputs[:, :, 0, 0], frames[:, :4, 0, 0].T)

    def test_token_stream_is_one_sequence(self):
        batches = make_batches(TokenDataset(5, np.arange(11) % 5), 2, 5)
        assert [b.size for b in batches] == [2]
        batch = batches[0]
        assert batch.inputs.shape == (5, 2, 5, 1)
        assert batch.targets[:, 1].tolist() == [1, 2, 3, 4, 0]
        assert batch.inputs[0, 1, :, 0].tolist() == [1, 0, 0, 0, 0]

    def test_too_short_sequences(self):
        with pytest.raises(DataError):
            make_batches(SequenceDataset(np.zeros((2, 5, 1, 1))), 2, 5)

    def test_empty_dataset_gives_no_batches(self):
        assert make_batches(SequenceDataset(np.zeros((0, 5, 1, 1))), 2, 4) == []

    def test_rejects_bad_sizes(self):
        data = SequenceDataset(np.zeros((2, 5, 1, 1)))
        with pytest.raises(DataError):
            make_batches(data, 0, 2)
        with pytest.raises(DataError):
            make_batches(data, 2, 0)


class TestDatasetService:

    def test_generated_shapes_split(self):
        run = parse_run_config("shapes.patch = 6\nshapes.sprite_size = 2\nshapes.count = 10\n"
                               "shapes.seq_len = 5\ndata.valid_fraction = 0.2\n")
        train, valid = DatasetService().build_datasets(run)
        assert (train.count, valid.count) == (8, 2)
        assert train.n == 36

    def test_token_valid_continues_the_cycle(self):
        run = parse_run_config("task = tokens\ntokens.vocab = 5\ntokens.length = 12\ntokens.valid_length = 4\n")
        train, valid = DatasetService().build_datasets(run)
        assert train.ids[-1] == 1
        assert valid.ids.tolist() == [2, 3, 4, 0]

    def test_file_type_must_match_task(self, tmp_path):
        path = tmp_path / "tokens.txt"
        save_dataset(str(path), gen_cyclic_tokens(4, 20))
        run = parse_run_config(f"data.source = file\ndata.train = {path}\ndata.valid = {path}\n"
                               "graph.source = knn\ngraph.points = p.txt\n", check_files=False)
        with pytest.raises(DataError):
            DatasetService().build_datasets(run)

    def test_load_round_trip(self, tmp_path):
        path = str(tmp_path / "seq.txt")
        frames = np.random.default_rng(4).random((2, 3, 4, 1))
        save_dataset(path, SequenceDataset(frames))
        assert np.array_equal(DatasetService().load(path).frames, frames)


def test_window_count_formula():
    for T, unroll in [(21, 20), (40, 19), (8, 3), (5, 4)]:
        data = SequenceDataset(np.zeros((1, T, 1, 1)))
        assert sum(b.size for b in make_batches(data, 100, unroll)) == math.floor((T - 1) / unroll)
