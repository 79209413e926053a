import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import G_H
from helpers import collect, system
from zonosafe import setops
from zonosafe.data import (
    build_batch,
    check_rank,
    load_batch,
    read_csv,
    right_annihilator,
    sample_disturbance_latents,
    save_batch,
    simulate,
    t_concat_disturbance,
    write_csv,
)
from zonosafe.exceptions import RankDeficiencyError, ShapeError
from zonosafe.sets import Zonotope


def test_replay_identity(rng):
    sys_ = system()
    tr, batch = collect(sys_, 12, rng)
    W0 = batch.X1 - sys_.A @ batch.X0 - sys_.B @ batch.U0
    np.testing.assert_allclose(W0, tr.disturbances, atol=1e-13)
    np.testing.assert_allclose(tr.disturbances, G_H @ tr.latents, atol=1e-15)


def test_recorded_disturbances_replay_exactly(rng):
    sys_ = system()
    tr = simulate(sys_, [1.0, 0.0], 5, rng, excitation=1.0)
    again = simulate(sys_, [1.0, 0.0], 5, inputs=tr.inputs, disturbances=tr.disturbances)
    np.testing.assert_array_equal(again.states, tr.states)


def test_fixed_excitation_sequence():
    sys_ = system()
    e = np.arange(4.0).reshape(1, 4)
    tr = simulate(sys_, [0.0, 0.0], 4, np.random.default_rng(0), gain=np.zeros((1, 2)),
                  excitation=e, disturbances=np.zeros((2, 4)))
    np.testing.assert_array_equal(tr.inputs, e)


def test_corner_latents():
    z = sample_disturbance_latents(3, 50, np.random.default_rng(0), "corners")
    assert set(np.unique(z)) == {-1.0, 1.0}
    with pytest.raises(ValueError):
        sample_disturbance_latents(3, 5, np.random.default_rng(0), "gauss")


def test_batch_shapes_and_head(rng):
    _, batch = collect(system(), 10, rng)
    assert (batch.T, batch.n, batch.m) == (10, 2, 1)
    assert batch.D0.shape == (3, 10)
    h = batch.head(4)
    np.testing.assert_array_equal(h.X0, batch.X0[:, :4])
    with pytest.raises(ShapeError):
        batch.head(11)
    with pytest.raises(ShapeError):
        build_batch(np.zeros((2, 4)), np.zeros((1, 4)))


def test_csv_and_json_roundtrip(rng, tmp_path):
    _, batch = collect(system(), 6, rng)
    write_csv(batch, tmp_path / "b.csv")
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,u1"
    back = read_csv(tmp_path / "b.csv")
    for name in ("U0", "X0", "X1"):
        np.testing.assert_array_equal(getattr(back, name), getattr(batch, name))
    save_batch(batch, tmp_path / "b.json")
    back = load_batch(tmp_path / "b.json")
    np.testing.assert_array_equal(back.X1, batch.X1)


def test_concatenation_hull_columns():
    dc = t_concat_disturbance(Zonotope(np.zeros(2), G_H), 5)
    hull = setops.mz_interval_hull(dc.mz)
    for t in range(5):
        np.testing.assert_allclose(hull.upper[:, t], [0.13, 0.07])
        np.testing.assert_allclose(hull.lower[:, t], [-0.13, -0.07])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4))
def test_concatenation_layout_is_bijective(T, s_w):
    dc = t_concat_disturbance(Zonotope(np.zeros(2), np.ones((2, s_w))), T)
    assert sorted(dc.layout.values()) == list(range(T * s_w))
    for (t, i), k in dc.layout.items():
        assert np.count_nonzero(dc.mz.generators[k][:, [c for c in range(T) if c != t]]) == 0


def test_realized_disturbance_sequence_is_member(rng):
    sys_ = system()
    tr, batch = collect(sys_, 8, rng)
    dc = t_concat_disturbance(sys_.disturbance, 8)
    assert setops.cmz_membership(tr.disturbances, dc.mz.to_constrained(), 1e-8)


def test_annihilator_dimension(rng):
    _, batch = collect(system(), 9, rng)
    Dp = right_annihilator(batch.D0)
    assert Dp.shape == (9, 9 - 3)
    np.testing.assert_allclose(batch.D0 @ Dp, 0.0, atol=1e-10)
    assert check_rank(batch.D0)


def test_rank_deficiency():
    D0 = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    assert not check_rank(D0)
    with pytest.raises(RankDeficiencyError, match="persistently exciting"):
        right_annihilator(D0)
