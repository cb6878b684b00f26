import numpy as np
import pytest

from tsvad.errors import ConfigError, DataError
from tsvad.windowing import (
    FrameScoreAccumulator,
    WindowSpec,
    aggregate_frame_scores,
    classify_positions,
    enumerate_pairs,
)


def oracle_pairs(clip_len, input_len, shift, stride):
    """Independent brute force: test every possible start index."""
    out = []
    for t in range(clip_len):
        if t % stride != 0:
            continue
        if t + input_len + shift > clip_len:
            continue
        out.append(
            (
                tuple(range(t, t + input_len)),
                tuple(range(t + shift, t + shift + input_len)),
            )
        )
    return out


def oracle_counts(clip_len, pairs):
    """Membership count: how many target lists contain each frame."""
    counts = np.zeros(clip_len, dtype=int)
    for _, target in pairs:
        for f in target:
            counts[f] += 1
    return counts


# --- spec validation -------------------------------------------------------


def test_spec_total_len():
    assert WindowSpec(6, 2).total_len == 8
    assert WindowSpec(8, 0).total_len == 8


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(input_len=0, shift=0),
        dict(input_len=-2, shift=0),
        dict(input_len=4, shift=5),
        dict(input_len=4, shift=-1),
        dict(input_len=4, shift=2, stride=0),
    ],
)
def test_invalid_spec_rejected(kwargs):
    with pytest.raises(ConfigError):
        WindowSpec(**kwargs)


def test_shift_equal_to_input_len_allowed():
    spec = WindowSpec(4, 4)
    recon, pred = classify_positions(spec)
    assert recon == ()
    assert pred == (0, 1, 2, 3)


# --- worked examples -------------------------------------------------------


def test_canonical_split_6_2():
    pairs = enumerate_pairs(8, WindowSpec(6, 2))
    assert len(pairs) == 1
    assert pairs[0].input_indices == (0, 1, 2, 3, 4, 5)
    assert pairs[0].target_indices == (2, 3, 4, 5, 6, 7)
    assert pairs[0].recon_positions == (0, 1, 2, 3)
    assert pairs[0].pred_positions == (4, 5)


def test_zero_shift_is_pure_reconstruction():
    pairs = enumerate_pairs(8, WindowSpec(8, 0))
    assert len(pairs) == 1
    assert pairs[0].target_indices == pairs[0].input_indices
    assert pairs[0].pred_positions == ()
    assert pairs[0].recon_positions == tuple(range(8))


def test_three_pairs_for_t10():
    pairs = enumerate_pairs(10, WindowSpec(6, 2))
    assert [p.start for p in pairs] == [0, 1, 2]


def test_classify_positions_examples():
    assert classify_positions(WindowSpec(6, 2)) == ((0, 1, 2, 3), (4, 5))
    assert classify_positions(WindowSpec(8, 0)) == (tuple(range(8)), ())
    assert classify_positions(WindowSpec(4, 4)) == ((), (0, 1, 2, 3))


def test_short_clip_yields_no_pairs():
    assert enumerate_pairs(7, WindowSpec(6, 2)) == []
    with pytest.raises(DataError):
        enumerate_pairs(0, WindowSpec(6, 2))


# --- properties against the oracle ----------------------------------------


def test_pairs_match_oracle_exhaustively():
    for input_len in (4, 6, 8, 10):
        for shift in range(0, min(4, input_len) + 1):
            for stride in (1, 2, 3):
                spec = WindowSpec(input_len, shift, stride)
                for clip_len in range(1, 65):
                    got = [
                        (p.input_indices, p.target_indices)
                        for p in enumerate_pairs(clip_len, spec)
                    ]
                    assert got == oracle_pairs(clip_len, input_len, shift, stride)


def test_pair_count_formula():
    for input_len in (4, 6, 8, 10):
        for shift in range(0, min(4, input_len) + 1):
            for stride in (1, 2, 3):
                spec = WindowSpec(input_len, shift, stride)
                length = input_len + shift
                for clip_len in range(1, 65):
                    expected = max(0, (clip_len - length) // stride + 1)
                    assert len(enumerate_pairs(clip_len, spec)) == expected


def test_target_indices_in_range():
    for clip_len in (8, 13, 40):
        for spec in (WindowSpec(6, 2), WindowSpec(4, 4, 2), WindowSpec(8, 0, 3)):
            for pair in enumerate_pairs(clip_len, spec):
                assert all(0 <= f < clip_len for f in pair.target_indices)
                assert all(0 <= f < clip_len for f in pair.input_indices)


def test_positions_partition_output():
    for input_len in range(1, 11):
        for shift in range(0, input_len + 1):
            recon, pred = classify_positions(WindowSpec(input_len, shift))
            assert len(recon) == input_len - shift
            assert len(pred) == shift
            assert sorted(recon + pred) == list(range(input_len))
            assert not set(recon) & set(pred)


# --- aggregation -----------------------------------------------------------


def test_single_pair_scores_pass_through():
    spec = WindowSpec(4, 1)
    (pair,) = enumerate_pairs(5, spec)
    errors = [0.1, 0.2, 0.3, 0.4]
    acc = aggregate_frame_scores([(pair, errors)], clip_len=5)
    scores = acc.scores()
    for pos, frame in enumerate(pair.target_indices):
        assert scores[frame] == pytest.approx(errors[pos])
    assert not acc.scored_mask[0]


def test_two_pairs_average():
    spec = WindowSpec(2, 0)
    pairs = enumerate_pairs(3, spec)
    assert len(pairs) == 2
    # frame 1 is covered by both pairs with errors 0.2 and 0.4
    acc = aggregate_frame_scores(
        [(pairs[0], [0.0, 0.2]), (pairs[1], [0.4, 0.0])], clip_len=3
    )
    assert acc.scores()[1] == pytest.approx(0.3)
    assert acc.count[1] == 2


def test_coverage_profile_t10():
    # Frozen from the counting oracle: T=10, W=6, S=2, stride=1.
    spec = WindowSpec(6, 2)
    pairs = enumerate_pairs(10, spec)
    acc = aggregate_frame_scores([(p, np.ones(6)) for p in pairs], clip_len=10)
    expected_counts = [0, 0, 1, 2, 3, 3, 3, 3, 2, 1]
    assert acc.count.tolist() == expected_counts
    assert oracle_counts(10, [(p.input_indices, p.target_indices) for p in pairs]).tolist() == expected_counts
    scores = acc.scores()
    assert np.all(scores[acc.scored_mask] == 1.0)


def test_counts_match_oracle_across_geometries():
    for input_len in (4, 6, 8, 10):
        for shift in range(0, min(4, input_len) + 1):
            for stride in (1, 2, 3):
                spec = WindowSpec(input_len, shift, stride)
                for clip_len in (spec.total_len, 17, 33, 64):
                    pairs = enumerate_pairs(clip_len, spec)
                    acc = aggregate_frame_scores(
                        [(p, np.ones(input_len)) for p in pairs], clip_len
                    )
                    expected = oracle_counts(
                        clip_len, [(p.input_indices, p.target_indices) for p in pairs]
                    )
                    assert acc.count.tolist() == expected.tolist()


def test_first_shift_frames_never_scored():
    spec = WindowSpec(6, 2)
    pairs = enumerate_pairs(20, spec)
    acc = aggregate_frame_scores([(p, np.ones(6)) for p in pairs], clip_len=20)
    assert acc.count[:2].tolist() == [0, 0]
    assert bool(acc.scored_mask[2:18].all())


def test_mismatched_error_vector_rejected():
    spec = WindowSpec(6, 2)
    (pair,) = enumerate_pairs(8, spec)
    acc = FrameScoreAccumulator(8)
    with pytest.raises(DataError):
        acc.add(pair, [1.0, 2.0])


def test_target_frame_out_of_clip_rejected():
    spec = WindowSpec(6, 2)
    (pair,) = enumerate_pairs(8, spec)
    acc = FrameScoreAccumulator(7)
    with pytest.raises(DataError):
        acc.add(pair, np.ones(6))


def test_positions_filter_restricts_coverage():
    spec = WindowSpec(6, 2)
    pairs = enumerate_pairs(10, spec)
    acc = aggregate_frame_scores(
        [(p, np.ones(6)) for p in pairs], clip_len=10, positions=pairs[0].pred_positions
    )
    # Predicted positions target frames t+6 and t+7 for t in {0, 1, 2}.
    assert acc.count.tolist() == [0, 0, 0, 0, 0, 0, 1, 2, 2, 1]
