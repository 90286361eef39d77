import numpy as np
import pytest

from hfnet.errors import DataError, DegenerateInputError, GeometryError, ShapeError
from hfnet.volume import (
    GridSpec,
    RoiSpec,
    Volume,
    average_frames,
    average_points,
    crop_roi,
    normalize_intensity,
    resample,
    transform_point,
)


def random_affine(rng, scale=1.0):
    a = np.eye(4)
    a[:3, :3] = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    a[:3, 3] = scale * rng.standard_normal(3)
    return a


class TestTransformPoint:
    def test_identity(self):
        assert np.allclose(transform_point(np.eye(4), (10, 20, 30)), (10, 20, 30))

    def test_translation(self):
        a = np.eye(4)
        a[0, 3] = 5.0
        assert np.allclose(transform_point(a, (1, 1, 1)), (6, 1, 1))

    def test_matches_explicit_matrix_vector_product(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = random_affine(rng, scale=10.0)
            p = rng.standard_normal(3)
            # oracle: full 4-vector product done by hand
            ph = np.array([p[0], p[1], p[2], 1.0])
            expected = np.array([sum(a[i, j] * ph[j] for j in range(4)) for i in range(3)])
            assert np.allclose(transform_point(a, p), expected, atol=1e-12)

    def test_composition(self):
        rng = np.random.default_rng(12)
        a, b = random_affine(rng), random_affine(rng)
        p = rng.standard_normal(3)
        lhs = transform_point(a @ b, p)
        rhs = transform_point(a, transform_point(b, p))
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_bad_bottom_row(self):
        a = np.eye(4)
        a[3, 0] = 1.0
        with pytest.raises(GeometryError):
            transform_point(a, (0, 0, 0))


class TestAveragePoints:
    def test_two_points(self):
        assert np.allclose(average_points([(0, 0, 0), (2, 2, 2)]), (1, 1, 1))

    def test_single_point(self):
        assert np.allclose(average_points([(3.5, -1, 2)]), (3.5, -1, 2))

    def test_matches_sum_over_n(self):
        rng = np.random.default_rng(13)
        pts = rng.standard_normal((100, 3))
        acc = np.zeros(3)
        for p in pts:
            acc += p
        assert np.allclose(average_points(pts), acc / 100, atol=1e-12)

    def test_empty(self):
        with pytest.raises(DataError):
            average_points([])


def make_volume(rng, dims=(8, 7, 6), spacing=(1, 1, 1)):
    return Volume(rng.standard_normal(dims).astype(np.float32), spacing)


class TestResample:
    def test_identity_on_source_grid(self):
        rng = np.random.default_rng(21)
        v = make_volume(rng)
        out = resample(v, GridSpec.of_volume(v))
        assert np.allclose(out.voxels, v.voxels, atol=1e-6)

    def test_constant_volume_stays_constant(self):
        v = Volume(np.full((10, 10, 8), 3.25, dtype=np.float32), (1, 1, 1))
        grid = GridSpec((4, 4, 4), (1, 1, 1), np.array(
            [[1, 0, 0, 2.3], [0, 1, 0, 1.7], [0, 0, 1, 0.9], [0, 0, 0, 1]], float))
        out = resample(v, grid)
        assert np.allclose(out.voxels, 3.25, atol=1e-6)

    def test_exact_on_linear_field(self):
        # trilinear interpolation reproduces affine scalar fields exactly,
        # so the oracle just evaluates f at each target point
        def f(x, y, z):
            return 2.0 * x + 3.0 * y - z

        ii, jj, kk = np.meshgrid(*(np.arange(n, dtype=float) for n in (12, 12, 10)), indexing="ij")
        v = Volume(f(ii, jj, kk).astype(np.float32), (1, 1, 1))
        grid_affine = np.eye(4)
        grid_affine[:3, 3] = (0.3, 0.45, 0.25)
        grid = GridSpec((8, 8, 6), (1, 1, 1), grid_affine)
        out = resample(v, grid)
        gi, gj, gk = np.meshgrid(*(np.arange(n, dtype=float) for n in (8, 8, 6)), indexing="ij")
        expected = f(gi + 0.3, gj + 0.45, gk + 0.25)
        assert np.abs(out.voxels - expected).max() < 1e-4

    def test_linear_field_through_world_transform(self):
        def f(x, y, z):
            return 0.5 * x - 1.5 * y + 2.0 * z + 4.0

        ii, jj, kk = np.meshgrid(*(np.arange(n, dtype=float) for n in (14, 14, 12)), indexing="ij")
        v = Volume(f(ii, jj, kk).astype(np.float32), (1, 1, 1))
        theta = 0.1
        rot = np.eye(4)
        rot[0, 0] = rot[1, 1] = np.cos(theta)
        rot[0, 1], rot[1, 0] = -np.sin(theta), np.sin(theta)
        rot[:3, 3] = (5.0, 4.0, 3.0)
        grid_affine = np.eye(4)
        grid_affine[:3, 3] = (1.0, 1.0, 1.0)
        grid = GridSpec((4, 4, 4), (1, 1, 1), grid_affine)
        out = resample(v, grid, world_transform=rot)
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    src = transform_point(rot, (i + 1.0, j + 1.0, k + 1.0))
                    assert abs(out.voxels[i, j, k] - f(*src)) < 1e-4

    def test_out_of_bounds_fill_zero(self):
        v = Volume(np.ones((4, 4, 4), dtype=np.float32), (1, 1, 1))
        grid_affine = np.eye(4)
        grid_affine[:3, 3] = (100.0, 0.0, 0.0)
        out = resample(v, GridSpec((4, 4, 4), (1, 1, 1), grid_affine))
        assert np.all(out.voxels == 0.0)

    def test_singular_transform(self):
        rng = np.random.default_rng(22)
        v = make_volume(rng)
        singular = np.zeros((4, 4))
        singular[3, 3] = 1.0
        with pytest.raises(GeometryError):
            resample(v, GridSpec.of_volume(v), world_transform=singular)


class TestCropRoi:
    def test_full_size_center_crop_is_identity(self):
        rng = np.random.default_rng(31)
        v = make_volume(rng, dims=(96, 96, 48))
        roi = RoiSpec(tuple(v.world_center()), (96, 96, 48), (1, 1, 1))
        out = crop_roi(v, roi)
        assert np.array_equal(out.voxels, v.voxels)
        assert np.allclose(out.affine, v.affine)

    def test_corner_center_pads_with_zeros(self):
        v = Volume(np.ones((8, 8, 8), dtype=np.float32), (1, 1, 1))
        out = crop_roi(v, RoiSpec((0.0, 0.0, 0.0), (8, 8, 8), (1, 1, 1)))
        assert out.dims == (8, 8, 8)
        assert out.voxels[0, 0, 0] == 0.0  # outside the source extent
        assert out.voxels[-1, -1, -1] == 1.0

    def test_random_center_matches_index_mapping_oracle(self):
        rng = np.random.default_rng(32)
        v = make_volume(rng, dims=(10, 9, 8))
        for _ in range(10):
            center = rng.uniform(-2, 12, size=3)
            size = (5, 4, 3)
            out = crop_roi(v, RoiSpec(tuple(center), size, (1, 1, 1)))
            start = np.floor(center).astype(int) - np.array(size) // 2
            for i in range(size[0]):
                for j in range(size[1]):
                    for k in range(size[2]):
                        si, sj, sk = start + (i, j, k)
                        if 0 <= si < 10 and 0 <= sj < 9 and 0 <= sk < 8:
                            assert out.voxels[i, j, k] == v.voxels[si, sj, sk]
                        else:
                            assert out.voxels[i, j, k] == 0.0

    def test_output_dims_fixed_regardless_of_overlap(self):
        rng = np.random.default_rng(33)
        v = make_volume(rng)
        for center in [(-50.0, 0.0, 0.0), (4.0, 3.5, 3.0), (500.0, 500.0, 500.0)]:
            out = crop_roi(v, RoiSpec(center, (6, 5, 4), (1, 1, 1)))
            assert out.dims == (6, 5, 4)

    def test_world_coordinates_preserved(self):
        rng = np.random.default_rng(34)
        v = make_volume(rng, dims=(12, 12, 10))
        out = crop_roi(v, RoiSpec((4.0, 5.0, 3.0), (4, 4, 4), (1, 1, 1)))
        # voxel (0,0,0) of the crop must map to the same world point as the
        # source voxel it copies
        start = np.floor([4.0, 5.0, 3.0]).astype(int) - 2
        assert np.allclose(transform_point(out.affine, (0, 0, 0)),
                           transform_point(v.affine, start.astype(float)))

    def test_spacing_mismatch_rejected(self):
        rng = np.random.default_rng(35)
        v = make_volume(rng)
        with pytest.raises(ShapeError):
            crop_roi(v, RoiSpec((0, 0, 0), (4, 4, 4), (2, 2, 2)))


class TestNormalize:
    def test_minmax_two_values(self):
        v = Volume(np.array([[[0.0, 2.0]]], dtype=np.float32), (1, 1, 1))
        out = normalize_intensity(v, "minmax")
        assert np.allclose(sorted(out.voxels.ravel()), [0.0, 1.0])

    def test_zscore_moments(self):
        rng = np.random.default_rng(41)
        v = make_volume(rng, dims=(9, 9, 9))
        out = normalize_intensity(v, "zscore")
        assert abs(out.voxels.mean()) < 1e-6
        assert abs(out.voxels.std() - 1.0) < 1e-5

    def test_zscore_matches_two_pass_oracle(self):
        rng = np.random.default_rng(42)
        v = make_volume(rng, dims=(6, 5, 4))
        data = v.voxels.astype(np.float64)
        mean = data.sum() / data.size
        var = ((data - mean) ** 2).sum() / data.size
        expected = (data - mean) / np.sqrt(var)
        out = normalize_intensity(v, "zscore")
        assert np.abs(out.voxels - expected).max() < 1e-6

    def test_constant_volume_rejected(self):
        v = Volume(np.full((4, 4, 4), 7.0, dtype=np.float32), (1, 1, 1))
        for method in ("zscore", "minmax"):
            with pytest.raises(DegenerateInputError):
                normalize_intensity(v, method)


class TestAverageFrames:
    def test_mean_of_normalized_frames(self):
        rng = np.random.default_rng(51)
        frames = [make_volume(rng, dims=(5, 5, 4)) for _ in range(3)]
        out = average_frames(frames)
        expected = sum(normalize_intensity(f, "zscore").voxels.astype(np.float64)
                       for f in frames) / 3
        assert np.abs(out.voxels - expected).max() < 1e-6

    def test_dim_mismatch(self):
        rng = np.random.default_rng(52)
        with pytest.raises(ShapeError):
            average_frames([make_volume(rng, (4, 4, 4)), make_volume(rng, (5, 4, 4))])

    def test_empty(self):
        with pytest.raises(DataError):
            average_frames([])
