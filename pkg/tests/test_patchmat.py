import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crinfsup import linalg
from crinfsup.mesh import extract_patch, crisscross_square, patch_geometry, regular_patch
from crinfsup.patchmat import (
    B_ROWS,
    assemble_M_closed_form,
    assemble_M_numeric,
    cyclic_pair_matrix,
    derived_matrices,
    edge_bubble,
    kernel_vectors,
    lambda_apply,
    patch_basis,
    scaled_block,
    verify_patch_lemmas,
)
from crinfsup.poly import PolyOnTriangle, divergence, gauss_legendre, gauss_points

from conftest import patch_for_seed, rotation

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def edge_points(a, b, n):
    s = 0.5 * (gauss_points(n) + 1)
    return a + s[:, None] * (b - a)


def test_edge_bubble_p3_reduces_to_legendre():
    T = np.array([[0.2, 0.1], [1.4, 0.3], [0.5, 1.2]])
    psi = edge_bubble(T, 0, 1, 3)
    phk = PolyOnTriangle.barycentric(2, T)
    x = np.array([[0.6, 0.4], [0.7, 0.6]])
    t = 1 - 2 * phk(x)
    np.testing.assert_allclose(psi(x), (5 * t**3 - 3 * t) / 2, atol=1e-13)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_edge_bubble_vanishes_on_other_edges(p):
    T = np.array([[0.0, 0.0], [1.3, 0.2], [0.3, 1.1]])
    psi = edge_bubble(T, 0, 1, p)
    for a, b in ((1, 2), (2, 0)):
        np.testing.assert_allclose(psi(edge_points(T[a], T[b], p)), 0, atol=1e-12)
    # mean one along its own edge
    x, w = gauss_legendre(p + 1)
    s = 0.5 * (x + 1)
    vals = psi(T[0] + s[:, None] * (T[1] - T[0]))
    assert np.dot(0.5 * w, vals) == pytest.approx(1.0, abs=1e-13)


def test_lambda_apply_examples():
    one = PolyOnTriangle.constant(1.0, REF)
    np.testing.assert_allclose(lambda_apply(one), [1, 1, 1, 0.5])
    phz = PolyOnTriangle.barycentric(0, REF)
    np.testing.assert_allclose(lambda_apply(phz), [1, 0, 0, 0.5 / 3])
    b = phz * PolyOnTriangle.barycentric(1, REF) * PolyOnTriangle.barycentric(2, REF)
    np.testing.assert_allclose(lambda_apply(divergence((b, b * 0.0))), 0, atol=1e-15)


@given(st.integers(1, 10_000))
def test_patch_basis_is_cr_conforming(seed):
    patch = patch_for_seed(seed)
    p = 3
    basis = patch_basis(patch, p)
    m = patch.m
    for k, piece in enumerate(basis.pieces):
        j = k // 5
        tm, tp = (j - 1) % m, j
        assert set(piece) == {tm, tp}
        pts = edge_points(patch.center, patch.ring[j], p)
        for c in range(2):
            np.testing.assert_allclose(piece[tm][c](pts), piece[tp][c](pts), atol=1e-12)
        # outer edges of the patch
        for t in (tm, tp):
            T = patch.triangle(t)
            pts = edge_points(T[1], T[2], p)
            for c in range(2):
                np.testing.assert_allclose(piece[t][c](pts), 0, atol=1e-12)


def test_patch_basis_rejects_even_degree():
    with pytest.raises(ValueError, match="odd"):
        patch_basis(regular_patch(4), 4)


@pytest.mark.parametrize("p", [3, 5])
def test_psi_divergence_values(p):
    patch = patch_for_seed(11)
    geom = patch_geometry(patch)
    basis = patch_basis(patch, p)
    m = patch.m
    for j in range(m):
        piece = basis.pieces[5 * j + 4]
        E = geom.edge_length[j]
        dm = divergence(piece[(j - 1) % m])
        dp = divergence(piece[j])
        np.testing.assert_allclose(dm.vertex_values(), 12 * geom.gamma_minus[j] / E, rtol=1e-11)
        np.testing.assert_allclose(dp.vertex_values(), -12 * geom.gamma_plus[j] / E, rtol=1e-11)
        assert dm.integrate() == pytest.approx(E, rel=1e-11)
        assert dp.integrate() == pytest.approx(-E, rel=1e-11)


def test_M_annihilates_s_and_entry_values():
    patch = patch_for_seed(5)
    geom = patch_geometry(patch)
    M = assemble_M_numeric(patch, 3)
    _, s = kernel_vectors(geom)
    assert np.linalg.norm(M @ s) <= 1e-12 * np.linalg.norm(M, 2)
    m = patch.m
    for j in range(m):
        E = geom.edge_length[j]
        # row phi_j phi_z^2 t, z slot of T[j-1] and T[j]
        assert M[5 * j + 1, 4 * ((j - 1) % m)] == pytest.approx(-1 / E, rel=1e-12)
        assert M[5 * j + 1, 4 * j] == pytest.approx(-1 / E, rel=1e-12)


@given(st.integers(1, 10_000))
def test_closed_form_matches_numeric(seed):
    patch = patch_for_seed(seed)
    geom = patch_geometry(patch)
    M = assemble_M_numeric(patch, 3)
    Mc = assemble_M_closed_form(geom)
    np.testing.assert_allclose(M, Mc, atol=1e-11 * np.abs(Mc).max())


def test_scaled_block_rows():
    geom = patch_geometry(patch_for_seed(8))
    for j in range(geom.m):
        blk = scaled_block(geom, j)
        np.testing.assert_array_equal(blk[1], [1, 0, 0, 0, 1, 0, 0, 0])
        np.testing.assert_allclose(blk[4], [geom.gamma_minus[j]] * 4 + [-geom.gamma_plus[j]] * 4)


def test_degree_independence():
    patch = patch_for_seed(21)
    M3 = assemble_M_numeric(patch, 3)
    M5 = assemble_M_numeric(patch, 5)
    np.testing.assert_allclose(M5, M3, atol=1e-11 * np.abs(M3).max())


def test_derived_matrices_structure():
    patch = patch_for_seed(4)
    geom = patch_geometry(patch)
    pm = derived_matrices(assemble_M_numeric(patch, 3), geom)
    m = geom.m
    assert pm.B.shape == (3 * m, 4 * m)
    np.testing.assert_allclose(pm.A, pm.D_L @ pm.M @ pm.D_R)
    rows = [5 * j + r for j in range(m) for r in B_ROWS]
    np.testing.assert_array_equal(pm.B, pm.A[rows])
    np.testing.assert_allclose(pm.A @ pm.v[0], 0, atol=1e-12 * np.abs(pm.A).max())
    E, T = geom.edge_length[0], geom.area[0]
    np.testing.assert_allclose(np.diag(pm.D_L)[:5], [E, -E, E, E, E / 12])
    np.testing.assert_allclose(np.diag(pm.D_R)[:4], [1, 1, 1, 6 / T])
    with pytest.raises(ValueError):
        derived_matrices(np.zeros((3, 3)), geom)


def test_kernel_vectors_m3():
    geom = patch_geometry(regular_patch(3))
    v, s = kernel_vectors(geom)
    expect = np.zeros(12)
    # one-based -e2 + e4 + e11 - e12
    expect[[1, 3, 10, 11]] = [-1, 1, 1, -1]
    np.testing.assert_array_equal(v[1], expect)
    np.testing.assert_array_equal(s, np.tile([0, 0, 0, 1.0], 3))


@pytest.mark.parametrize("m", range(3, 13))
def test_kernel_vectors_properties(m):
    geom = patch_geometry(regular_patch(m))
    v, _ = kernel_vectors(geom)
    # v_j . e_{4k-2} = -delta_jk (one-based)
    for j in range(1, m + 1):
        for k in range(1, m + 1):
            assert v[j][4 * k - 3] == (-1.0 if j == k else 0.0)
    assert np.linalg.matrix_rank(np.column_stack(v)) == m + 2


def test_lemmas_equilateral_hexagon():
    rep = verify_patch_lemmas(regular_patch(6), 3)
    assert (rep.dim_ker_B, rep.dim_ker_A, rep.rank_M) == (8, 1, 23)
    assert rep.passed
    d = rep.to_json()
    assert {"m", "p", "sigma", "dim_ker_B", "dim_ker_A", "dim_ker_M", "rank_M", "angles", "pass"} <= set(d)


def test_lemmas_m3():
    from crinfsup.mesh import random_patch

    rep = verify_patch_lemmas(random_patch(3, math.radians(20), seed=9), 3)
    assert rep.dim_ker_B == 4 and rep.sigma == 0 and rep.passed


def test_lemmas_crisscross():
    tri = crisscross_square()
    rep = verify_patch_lemmas(extract_patch(tri, int(tri.interior_vertices[0])), 3)
    assert rep.passed and rep.dim_ker_B == 6


@given(st.integers(1, 10_000), st.lists(st.booleans(), min_size=12, max_size=12))
def test_sign_flip_invariance(seed, flips):
    patch = patch_for_seed(seed)
    geom = patch_geometry(patch)
    pm = derived_matrices(assemble_M_numeric(patch, 3), geom)
    m = geom.m
    signs = np.ones(5 * m)
    for j in range(m):
        if flips[j]:
            signs[[5 * j, 5 * j + 2, 5 * j + 4]] = -1
    M2 = signs[:, None] * pm.M
    pm2 = derived_matrices(M2, geom)
    for a, b in ((pm.M, pm2.M), (pm.A, pm2.A), (pm.B, pm2.B)):
        assert linalg.rank(a) == linalg.rank(b)


def test_scale_invariance():
    patch = patch_for_seed(13)
    big = patch.transformed(7.5 * rotation(1.1), shift=(3, -1))
    g1, g2 = patch_geometry(patch), patch_geometry(big)
    A1 = derived_matrices(assemble_M_numeric(patch, 3), g1).A
    A2 = derived_matrices(assemble_M_numeric(big, 3), g2).A
    np.testing.assert_allclose(A2, A1, atol=1e-11 * np.abs(A1).max())
    assert verify_patch_lemmas(big).passed


@pytest.mark.parametrize("m", range(3, 9))
def test_cyclic_pair_matrix(m):
    N = linalg.nullspace(cyclic_pair_matrix(m))
    assert N.shape[1] == (1 if m % 2 == 0 else 0)
    assert np.linalg.det(cyclic_pair_matrix(m)) == pytest.approx(1 - (-1) ** m)
    if m % 2 == 0:
        np.testing.assert_allclose(N[:, 0] / N[0, 0], (-1.0) ** np.arange(m), atol=1e-13)
