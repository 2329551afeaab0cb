import numpy as np
import pytest
from scipy import sparse

from privedit.errors import DimensionMismatch, EmptyRegion, UnanchoredComponent
from privedit.imaging import Image, SoftMask
from privedit.poisson import (
    CgStats,
    GuidanceField,
    PoissonSystem,
    build_poisson_system,
    guidance_from_image,
    seamless_clone,
    solve_cg,
)


def dense_poisson_oracle(region: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Scalar-loop reference: assemble the dense system from the defining
    equation and solve directly. src provides guidance, dst the boundary."""
    h, w = region.shape
    interior = [(y, x) for y in range(h) for x in range(w) if region[y, x] >= 0.5]
    index = {p: i for i, p in enumerate(interior)}
    n = len(interior)
    channels = src.shape[2]
    a = np.zeros((n, n))
    b = np.zeros((n, channels))
    for (y, x), i in index.items():
        neighbors = [(y, x + 1), (y, x - 1), (y + 1, x), (y - 1, x)]
        for (ny, nx) in neighbors:
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            a[i, i] += 1.0
            b[i] += src[y, x] - src[ny, nx]
            if (ny, nx) in index:
                a[i, index[(ny, nx)]] -= 1.0
            else:
                b[i] += dst[ny, nx]
    sol = np.linalg.solve(a, b)
    out = dst.copy()
    for (y, x), i in index.items():
        out[y, x] = sol[i]
    return out


def _fake_system(matrix, rhs) -> PoissonSystem:
    n = rhs.shape[0]
    return PoissonSystem(
        matrix=sparse.csr_matrix(matrix),
        rhs=np.asarray(rhs, dtype=np.float64),
        index_of=np.full((1, n), -1),
        interior=np.zeros((1, n), dtype=bool),
        shape=(1, n),
    )


def test_single_pixel_system_closed_form():
    region = np.zeros((3, 3))
    region[1, 1] = 1.0
    boundary = Image(np.full((3, 3, 3), 0.7))
    guidance = GuidanceField(gx=np.zeros((3, 3, 3)), gy=np.zeros((3, 3, 3)))
    system = build_poisson_system(SoftMask(region), guidance, boundary)
    assert system.size == 1
    assert system.matrix.toarray()[0, 0] == pytest.approx(4.0)
    assert system.rhs[0] == pytest.approx([2.8, 2.8, 2.8])
    solution, stats = solve_cg(system)
    assert solution[0] == pytest.approx([0.7, 0.7, 0.7])


def test_zero_guidance_constant_boundary_harmonic():
    region = np.zeros((8, 8))
    region[2:6, 2:6] = 1.0
    k = 0.35
    boundary = Image(np.full((8, 8, 3), k))
    guidance = GuidanceField(gx=np.zeros((8, 8, 3)), gy=np.zeros((8, 8, 3)))
    system = build_poisson_system(SoftMask(region), guidance, boundary)
    solution, stats = solve_cg(system, tol=1e-10)
    assert stats.converged
    assert np.allclose(solution, k, atol=1e-8)


def test_empty_region_rejected():
    with pytest.raises(EmptyRegion):
        build_poisson_system(
            SoftMask(np.zeros((4, 4))),
            GuidanceField(gx=np.zeros((4, 4, 3)), gy=np.zeros((4, 4, 3))),
            Image(np.zeros((4, 4, 3))),
        )


def test_unanchored_component_rejected():
    with pytest.raises(UnanchoredComponent):
        build_poisson_system(
            SoftMask(np.ones((4, 4))),
            GuidanceField(gx=np.zeros((4, 4, 3)), gy=np.zeros((4, 4, 3))),
            Image(np.zeros((4, 4, 3))),
        )


def test_cg_identity_matrix_one_iteration():
    rhs = np.array([[1.0], [2.0], [3.0]])
    system = _fake_system(np.eye(3), rhs)
    solution, stats = solve_cg(system)
    assert np.allclose(solution, rhs)
    assert stats.iterations == [1]


def test_cg_two_by_two_hand_solved():
    system = _fake_system(np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([[1.0], [2.0]]))
    solution, stats = solve_cg(system, tol=1e-12)
    assert solution[:, 0] == pytest.approx([1.0 / 11.0, 7.0 / 11.0], abs=1e-10)


def test_cg_grid_laplacian_matches_dense_oracle():
    rng = np.random.default_rng(31)
    region = np.zeros((10, 10))
    region[1:9, 1:9] = 1.0
    src = rng.uniform(size=(10, 10, 3))
    dst = rng.uniform(size=(10, 10, 3))
    system = build_poisson_system(SoftMask(region), guidance_from_image(Image(src)), Image(dst))
    solution, stats = solve_cg(system, tol=1e-10)
    assert stats.converged
    oracle = dense_poisson_oracle(region, src, dst)
    ys, xs = np.nonzero(system.interior)
    assert np.abs(solution - oracle[ys, xs]).max() <= 1e-5


def test_cg_reports_nonconvergence():
    system = _fake_system(np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([[1.0], [2.0]]))
    _, stats = solve_cg(system, tol=1e-14, max_iter=0)
    assert not stats.converged


def test_clone_src_equals_dst_is_identity():
    rng = np.random.default_rng(32)
    data = rng.uniform(0.1, 0.9, size=(12, 12, 3))
    region = np.zeros((12, 12))
    region[3:9, 3:9] = 1.0
    out, stats = seamless_clone(Image(data), Image(data.copy()), SoftMask(region))
    assert stats.converged
    assert np.abs(out.data - data).max() <= 1e-6


def test_clone_constant_src_constant_boundary():
    region = np.zeros((9, 9))
    region[2:7, 2:7] = 1.0
    src = Image(np.full((9, 9, 3), 0.2))
    dst = Image(np.full((9, 9, 3), 0.8))
    out, stats = seamless_clone(src, dst, SoftMask(region))
    assert np.allclose(out.data[region >= 0.5], 0.8, atol=1e-6)


def test_clone_matches_dense_oracle_8x8_and_16x16():
    rng = np.random.default_rng(33)
    for size, lo, hi in ((8, 2, 6), (16, 4, 12)):
        region = np.zeros((size, size))
        region[lo:hi, lo:hi] = 1.0
        src = rng.uniform(0.2, 0.8, size=(size, size, 3))
        dst = rng.uniform(0.2, 0.8, size=(size, size, 3))
        out, stats = seamless_clone(Image(src), Image(dst), SoftMask(region), tol=1e-10)
        assert stats.converged
        oracle = np.clip(dense_poisson_oracle(region, src, dst), 0.0, 1.0)
        assert np.abs(out.data - oracle).max() <= 1e-5
        outside = region < 0.5
        assert np.array_equal(out.data[outside], dst[outside])


def test_clone_maximum_principle_zero_guidance():
    rng = np.random.default_rng(34)
    region = np.zeros((10, 10))
    region[2:8, 2:8] = 1.0
    src = Image(np.full((10, 10, 3), 0.5))  # constant: zero guidance
    dst = Image(rng.uniform(0.2, 0.9, size=(10, 10, 3)))
    out, _ = seamless_clone(src, dst, SoftMask(region), tol=1e-10)
    boundary = np.zeros((10, 10), dtype=bool)
    boundary[1:9, 1:9] = True
    boundary &= ~(region >= 0.5)
    interior_vals = out.data[region >= 0.5]
    for c in range(3):
        b = dst.data[:, :, c][boundary]
        assert interior_vals[:, c].min() >= b.min() - 1e-6
        assert interior_vals[:, c].max() <= b.max() + 1e-6


def test_clone_linearity_pre_clamp():
    rng = np.random.default_rng(35)
    region = np.zeros((10, 10))
    region[3:7, 3:7] = 1.0
    src = rng.uniform(0.3, 0.6, size=(10, 10, 3))
    dst = rng.uniform(0.3, 0.6, size=(10, 10, 3))
    full, _ = seamless_clone(Image(src), Image(dst), SoftMask(region), tol=1e-11)
    half, _ = seamless_clone(Image(0.5 * src), Image(0.5 * dst), SoftMask(region), tol=1e-11)
    # Inputs keep both solutions strictly inside (0, 1): the clamp is inert.
    assert 0.0 < half.data.min() and full.data.max() < 1.0
    assert np.abs(half.data - 0.5 * full.data).max() <= 1e-6


def test_clone_translation_invariance():
    rng = np.random.default_rng(36)
    src = rng.uniform(0.2, 0.8, size=(12, 16, 3))
    dst = rng.uniform(0.2, 0.8, size=(12, 16, 3))
    region = np.zeros((12, 16))
    region[3:8, 3:8] = 1.0
    out_a, _ = seamless_clone(Image(src), Image(dst), SoftMask(region), tol=1e-11)
    shift = 5
    src_b = np.roll(src, shift, axis=1)
    dst_b = np.roll(dst, shift, axis=1)
    region_b = np.roll(region, shift, axis=1)
    out_b, _ = seamless_clone(Image(src_b), Image(dst_b), SoftMask(region_b), tol=1e-11)
    sel = region >= 0.5
    assert np.abs(out_b.data[np.roll(sel, shift, axis=1)] - out_a.data[sel]).max() <= 1e-6


def test_cg_energy_monotone():
    rng = np.random.default_rng(37)
    region = np.zeros((10, 10))
    region[1:9, 1:9] = 1.0
    src = rng.uniform(size=(10, 10, 3))
    dst = rng.uniform(size=(10, 10, 3))
    system = build_poisson_system(SoftMask(region), guidance_from_image(Image(src)), Image(dst))
    _, stats = solve_cg(system, tol=1e-10, track_energy=True)
    for hist in stats.energy_history:
        diffs = np.diff(np.array(hist))
        assert np.all(diffs <= 1e-12)


def test_clone_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        seamless_clone(
            Image(np.zeros((4, 4, 3))), Image(np.zeros((5, 5, 3))), SoftMask(np.zeros((4, 4)))
        )


def test_clone_soft_region_narrow_band():
    """A feathered region still replaces the solid interior and leaves
    alpha-zero pixels untouched."""
    rng = np.random.default_rng(38)
    src = rng.uniform(0.2, 0.8, size=(12, 12, 3))
    dst = rng.uniform(0.2, 0.8, size=(12, 12, 3))
    region = np.zeros((12, 12))
    region[3:9, 3:9] = 1.0
    region[3, 3:9] = 0.7  # feather row: interior but blended
    region[2, 3:9] = 0.3  # outside the solve, alpha > 0
    out, _ = seamless_clone(Image(src), Image(dst), SoftMask(region))
    assert np.array_equal(out.data[region == 0.0], dst[region == 0.0])
    assert np.array_equal(out.data[region == 0.3], dst[region == 0.3])


def test_cg_jacobi_preconditioning_same_solution():
    rng = np.random.default_rng(39)
    region = np.zeros((12, 12))
    region[2:10, 2:10] = 1.0
    src = rng.uniform(size=(12, 12, 3))
    dst = rng.uniform(size=(12, 12, 3))
    system = build_poisson_system(SoftMask(region), guidance_from_image(Image(src)), Image(dst))
    plain, stats_plain = solve_cg(system, tol=1e-10)
    pre, stats_pre = solve_cg(system, tol=1e-10, jacobi=True)
    assert stats_plain.converged and stats_pre.converged
    assert np.abs(plain - pre).max() <= 1e-7
