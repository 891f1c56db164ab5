import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dendricomm import mesh
from dendricomm.mst import mst_length

SQUARES = [4, 16, 64, 256, 1024]


def test_point_closed_forms():
    assert mesh.aggregation_cost_point(4) == 2
    assert mesh.aggregation_cost_point(1) == 0
    assert mesh.delivery_cost_point(4) == 6
    assert mesh.delivery_cost_point(64) == 504


def test_non_square_rejected():
    for f in (mesh.aggregation_cost_point, mesh.delivery_cost_point, mesh.delivery_cost_rmst):
        with pytest.raises(ValueError):
            f(8)


@pytest.mark.parametrize("D", SQUARES)
def test_brute_force_matches_closed_forms(D):
    assert mesh.aggregation_cost_bruteforce(D) == mesh.aggregation_cost_point(D)
    assert mesh.delivery_cost_rmst(D) == mesh.delivery_cost_point(D)


def test_direct_double_loop_sum_d16():
    # independent of grid_points: explicit loops over the 4 x 4 grid
    total = sum((x + y) / 4 for x in range(4) for y in range(4))
    assert total == 12 == mesh.aggregation_cost_point(16)


def test_mesh_config_derived():
    c = mesh.MeshConfig(256, 16)
    assert (c.N, c.l, c.M, c.D_hat, c.N_hat) == (16, 1 / 16, 1024, 64, 8)
    assert c.l_hat == 1 / 32
    with pytest.raises(ValueError):
        mesh.MeshConfig(0, 1)


def test_k1_degenerates_to_point():
    for D in SQUARES:
        r = mesh.cost_report(D, 1)
        assert r.C_AG == 0
        assert r.C_AA == pytest.approx(r.C_A, rel=1e-14)
        assert r.C_E_hat == pytest.approx(r.C_E, rel=1e-14)
        assert r.eta == pytest.approx(1.0, rel=1e-14)


def test_dendritic_aggregation_examples():
    ag, aa = mesh.dendritic_aggregation_cost(mesh.MeshConfig(16, 16))
    assert ag == pytest.approx(7.5, rel=1e-14) and aa == pytest.approx(2.0, rel=1e-14)
    b_ag, b_aa = mesh.dendritic_aggregation_bounds(mesh.MeshConfig(16, 16))
    assert (b_ag, b_aa) == (8.0, 4.0)
    ag4, _ = mesh.dendritic_aggregation_cost(mesh.MeshConfig(16, 4))
    assert ag4 == pytest.approx(4 * (math.sqrt(2) - 2 ** -1.5), rel=1e-14)
    assert ag4 == pytest.approx(math.sqrt(16) * (4 ** 0.25 - 4 ** -0.75), rel=1e-14)


def test_dendritic_delivery_examples():
    c = mesh.MeshConfig(16, 16)
    assert mesh.dendritic_delivery_cost(c) == pytest.approx(31.5, rel=1e-14)
    assert mesh.dendritic_delivery_cost_approx(c) == pytest.approx(32.0, rel=1e-14)
    c = mesh.MeshConfig(256, 4)
    exact, approx = mesh.dendritic_delivery_cost(c), mesh.dendritic_delivery_cost_approx(c)
    # the relative gap is exactly 1 / (D sqrt(K)) = 1/512
    assert 1 - exact / approx == pytest.approx(1 / 512, rel=1e-12)


def test_grid_realized_dendritic_delivery():
    # D=16, K=16: 8 x 8 dendrite grid, 4 input dimensions each spanning every PE
    cfg = mesh.MeshConfig(16, 16)
    rows, cols = mesh.dendrite_grid(cfg)
    assert (rows, cols) == (8, 8)
    tree = mst_length(mesh.grid_points(rows, cols, cfg.l_hat), "manhattan")
    assert cfg.D_hat * tree == pytest.approx(mesh.dendritic_delivery_cost(cfg), rel=1e-14)


@given(D=st.sampled_from([16, 64, 256, 1024, 4096]), K=st.sampled_from([4, 9, 16, 25, 64, 256]))
def test_bounds_and_approximation(D, K):
    cfg = mesh.MeshConfig(D, K)
    ag, aa = mesh.dendritic_aggregation_cost(cfg)
    b_ag, b_aa = mesh.dendritic_aggregation_bounds(cfg)
    assert ag < b_ag and aa < b_aa
    exact, approx = mesh.dendritic_delivery_cost(cfg), mesh.dendritic_delivery_cost_approx(cfg)
    assert abs(exact - approx) / approx <= 1 / (D * math.sqrt(K)) + 1e-15


def test_eta_map_monotone_and_small():
    reports = mesh.eta_map([64, 256, 1024], [1, 4, 16, 64])
    for D in (64, 256, 1024):
        etas = [r.eta for r in reports if r.D == D]
        assert etas[0] == 1.0
        assert all(a > b for a, b in zip(etas, etas[1:]))
    assert mesh.cost_report(1024, 64).eta < 0.5
    with pytest.raises(ValueError):
        mesh.eta_map([], [1])


def test_report_invariants_and_csv():
    r = mesh.cost_report(256, 16)
    assert r.C_A_hat == r.C_AG + r.C_AA
    assert r.eta == (r.C_A_hat + r.C_E_hat) / (r.C_A + r.C_E)
    text = mesh.reports_to_csv([r])
    assert text.splitlines()[0] == ",".join(mesh.CSV_COLUMNS)


def test_dendrite_grid_rectangular_and_invalid():
    assert mesh.dendrite_grid(mesh.MeshConfig(32, 4)) == (8, 8)
    rows, cols = mesh.dendrite_grid(mesh.MeshConfig(16, 4))
    assert rows * cols == 32 and rows <= cols
    with pytest.raises(ValueError):
        mesh.dendrite_grid(mesh.MeshConfig(16, 2))


def test_sparse_dense_degeneracy():
    for K in (1, 4, 16):
        cfg = mesh.MeshConfig(64, K)
        mean, std = mesh.sparse_delivery_cost(cfg, 0.0, n_patterns=3)
        assert mean == pytest.approx(mesh.dendritic_delivery_cost(cfg), rel=1e-12)
        assert std == pytest.approx(0.0, abs=1e-9)


def test_sparse_single_target_costs_zero():
    # D=1: one PE, so every dimension has at most one target
    costs = mesh.sparse_delivery_costs(mesh.MeshConfig(1, 1), 0.5, 10, seed=0)
    assert np.all(costs == 0.0)


def test_sparse_reproducible_and_seed_dependent():
    cfg = mesh.MeshConfig(64, 4)
    a = mesh.sparse_delivery_costs(cfg, 0.85, 5, seed=1)
    assert np.array_equal(a, mesh.sparse_delivery_costs(cfg, 0.85, 5, seed=1))
    assert not np.array_equal(a, mesh.sparse_delivery_costs(cfg, 0.85, 5, seed=2))
    # pattern p depends only on (seed, p)
    assert np.array_equal(a[:3], mesh.sparse_delivery_costs(cfg, 0.85, 3, seed=1))


def test_sparse_cost_below_dense():
    cfg = mesh.MeshConfig(64, 4)
    mean, _ = mesh.sparse_delivery_cost(cfg, 0.5, 5)
    assert 0 < mean < mesh.dendritic_delivery_cost(cfg)


def test_sparse_argument_errors():
    cfg = mesh.MeshConfig(16, 4)
    with pytest.raises(ValueError):
        mesh.sparse_delivery_costs(cfg, 1.0, 5, 0)
    with pytest.raises(ValueError):
        mesh.sparse_delivery_costs(cfg, 0.5, 0, 0)
    with pytest.raises(ValueError):
        mesh.sparse_delivery_costs(mesh.MeshConfig(16, 2), 0.5, 1, 0)


def test_fit_k_slope():
    assert mesh.fit_k_slope([(K, math.sqrt(K) ** -0.5) for K in (1, 4, 16, 64)]) == pytest.approx(-0.5)
    assert mesh.fit_k_slope([(1, 3.0), (4, 3.0)]) == pytest.approx(0.0, abs=1e-12)
    dense = [(K, mesh.dendritic_delivery_cost(mesh.MeshConfig(256, K))) for K in (1, 4, 16, 64)]
    assert abs(mesh.fit_k_slope(dense) + 0.5) <= 0.02
    with pytest.raises(ValueError):
        mesh.fit_k_slope([(4, 1.0), (4, 2.0)])
    with pytest.raises(ValueError):
        mesh.fit_k_slope([(1, 0.0), (4, 2.0)])
