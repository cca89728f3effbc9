import numpy as np
import pytest
from numpy.testing import assert_allclose

from atomchan.baselines import (
    GridDictionary,
    an_cost,
    complexity_budget,
    gains_for_frequencies,
    hankel_matrix,
    hankel_split,
    lmmse_estimate,
    music_estimate,
    omp_estimate,
)
from atomchan.channel import SparseChannel, composite_model, draw_channel
from atomchan.geometry import DimensionVector, SensingMatrix, compose_sensing, torus_distance
from atomchan.measurement import PilotMatrix, build_operator, generate_pilots, observe

COMP = compose_sensing(SensingMatrix.identity([4]), SensingMatrix.identity([4, 6]))
DIMS = [4, 4, 6]


def qpsk_operator(P=6, seed=0):
    return build_operator(generate_pilots("qpsk", 4, P, seed), COMP, 24)


def channel(freqs, gains):
    f = np.asarray(freqs, float).reshape(3, -1)
    return SparseChannel(f, np.asarray(gains, complex), DimensionVector.of([4]),
                         DimensionVector.of([4, 6]), (0, 1, 2))


def test_grid_dictionary():
    g = GridDictionary(DIMS, (2, 2, 3))
    assert g.length == 12
    f = g.frequencies()
    assert f.shape == (3, 12)
    assert_allclose(f[:, 1], [0, 0, 1 / 3])
    assert_allclose(np.linalg.norm(g.atoms(), axis=0), 1)
    assert GridDictionary.proportional(DIMS, 2376).sizes == (12, 12, 17)
    with pytest.raises(ValueError):
        GridDictionary(DIMS, (2, 2))


@pytest.mark.parametrize("P", [6, 3])
def test_omp_on_grid_exact(P):
    grid = GridDictionary(DIMS, (8, 8, 12))
    f = grid.frequencies()[:, [37, 500]]
    h = composite_model(channel(f, [1.0, 0.6j]))
    op = qpsk_operator(P, 1)
    res = omp_estimate(op, observe(op, h).y, 2, grid)
    assert sorted(res.selected) == [37, 500]
    assert_allclose(res.l_u_hat, h, atol=1e-10)
    assert res.residual_norms[-1] < 1e-10


def test_omp_residual_nonincreasing():
    ch = draw_channel(4, [4], [4, 6], 3)
    op = qpsk_operator(4, 2)
    res = omp_estimate(op, observe(op, composite_model(ch), 10.0, 0, n_paths=4).y, 4,
                       GridDictionary(DIMS, (8, 8, 12)))
    assert np.all(np.diff(res.residual_norms) <= 1e-12)
    assert len(set(res.selected)) == 4


def test_omp_off_grid_error_floor():
    grid = GridDictionary(DIMS, (8, 8, 12))
    true = np.array([[0.5 / 8], [0.5 / 8], [0.5 / 12]])
    op = qpsk_operator()
    res = omp_estimate(op, observe(op, composite_model(channel(true, [1.0]))).y, 1, grid)
    # the best the grid can do is half a cell in every dimension
    assert np.all(torus_distance(res.freqs, true) >= true - 1e-12)


def test_hankel_matrix_structure(rng):
    h = rng.standard_normal(96) + 1j * rng.standard_normal(96)
    assert hankel_split(4) == (2, 3) and hankel_split(6) == (3, 4)
    x = hankel_matrix(h, DIMS)
    assert x.shape == (12, 36)
    cube = h.reshape(DIMS)
    assert x[0, 0] == cube[0, 0, 0]
    # row (1,1,2) and column (1,2,3) index (2,3,5)
    assert x[1 * 6 + 1 * 3 + 2, 1 * 12 + 2 * 4 + 3] == cube[2, 3, 5]
    with pytest.raises(ValueError):
        hankel_matrix(h, DIMS, row_dims=(5, 1, 1))


def test_music_single_atom_nearest_grid_point():
    grid = GridDictionary(DIMS, (16, 16, 24))
    true = np.array([0.31, 0.62, 0.12])
    h = composite_model(channel(true, [1.0]))
    res = music_estimate(h, DIMS, 1, grid)
    nearest = np.round(true * np.array(grid.sizes)) / np.array(grid.sizes)
    assert_allclose(res.freqs[:, 0], nearest, atol=1e-12)
    assert res.n_peaks == 1


def test_music_two_atoms_and_phase_invariance():
    grid = GridDictionary(DIMS, (8, 8, 12))
    f = grid.frequencies()[:, [100, 600]]
    h = composite_model(channel(f, [1.0, 0.8]))
    a = music_estimate(h, DIMS, 2, grid)
    b = music_estimate(np.exp(1j * 0.7) * h, DIMS, 2, grid)
    assert_allclose(np.sort(a.freqs, axis=1), np.sort(f, axis=1), atol=1e-12)
    assert_allclose(np.sort(a.freqs, axis=1), np.sort(b.freqs, axis=1))


def test_music_noise_only_returns_k_points(rng):
    h = rng.standard_normal(96) + 1j * rng.standard_normal(96)
    res = music_estimate(h, DIMS, 3, GridDictionary(DIMS, (6, 6, 9)))
    assert res.freqs.shape == (3, 3)
    assert np.all(np.isfinite(res.values))


def test_music_rejects_large_k():
    with pytest.raises(ValueError):
        music_estimate(np.ones(96), DIMS, 12, GridDictionary(DIMS, (4, 4, 6)))


def test_gains_for_known_frequencies():
    ch = draw_channel(3, [4], [4, 6], 8)
    op = qpsk_operator(3, 4)
    gains, l_hat = gains_for_frequencies(op, observe(op, composite_model(ch)).y, DIMS, ch.freqs)
    assert_allclose(gains, ch.gains, atol=1e-10)
    assert_allclose(l_hat, composite_model(ch), atol=1e-10)


def test_lmmse_limits(rng):
    op = qpsk_operator(6, 0)
    y = rng.standard_normal(op.L) + 1j * rng.standard_normal(op.L)
    assert np.linalg.norm(lmmse_estimate(op, y, 3, 1e12)) < 1e-8
    sq = build_operator(PilotMatrix(np.eye(4)), COMP, 24)
    y4 = rng.standard_normal(96) + 1j * rng.standard_normal(96)
    assert_allclose(lmmse_estimate(sq, y4, 3, 0.0), y4, atol=1e-10)
    with pytest.raises(ValueError):
        lmmse_estimate(op, y, 3, -1.0)


def test_lmmse_dense_oracle(rng):
    op = qpsk_operator(3, 5)
    q = op.dense()
    y = rng.standard_normal(op.L) + 1j * rng.standard_normal(op.L)
    c = 2 / 96
    oracle = c * q.conj().T @ np.linalg.inv(c * q @ q.conj().T + 0.3 * np.eye(op.L)) @ y
    assert_allclose(lmmse_estimate(op, y, 2, 0.3), oracle, atol=1e-10)


def test_lmmse_beats_pseudo_inverse_at_low_snr():
    rng = np.random.default_rng(0)
    op = qpsk_operator(6, 0)
    pinv = np.linalg.pinv(op.dense())
    err_lmmse = err_ls = 0.0
    for trial in range(100):
        snr = [-10.0, 0.0, 10.0][trial % 3]
        ch = draw_channel(3, [4], [4, 6], rng)
        h = composite_model(ch)
        obs = observe(op, h, snr, rng, n_paths=3)
        err_lmmse += np.linalg.norm(lmmse_estimate(op, obs.y, 3, obs.noise_variance) - h) ** 2
        err_ls += np.linalg.norm(pinv @ obs.y - h) ** 2
    assert err_lmmse <= err_ls


def test_complexity_budget():
    assert an_cost(96) == pytest.approx(1.41e8, rel=0.01)
    omp5 = complexity_budget("omp", DIMS, 5)
    omp1 = complexity_budget("omp", DIMS, 1)
    assert omp5["length"] < omp1["length"]
    assert omp5["length"] == 2376
    music = complexity_budget("music", DIMS, 5)
    assert music["H"] == 12 and music["length"] == 65536
    assert complexity_budget("omp", DIMS, 5, target_ops=np.inf, max_length=1000)["length"] == 1000
    with pytest.raises(ValueError):
        complexity_budget("an", DIMS, 5)
