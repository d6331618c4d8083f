import math

import numpy as np
import pytest

from groundot import (
    Camera,
    DegenerateRayError,
    GroundGrid,
    build_covariance,
    camera_distance,
    cell_to_world,
    closest_camera,
    min_max_normalize,
    view_ray_angle,
    view_ray_frame,
)


def cam(x, y, h=0.0, id=1):
    return Camera(id=id, position=(x, y, h))


class TestCellToWorld:
    def test_cell_center_by_construction(self):
        grid = GroundGrid(rows=2, cols=2, cell_size=0.1)
        assert cell_to_world(grid, (0, 0)) == pytest.approx((0.05, 0.05))

    def test_far_corner_hand_evaluated(self):
        grid = GroundGrid(rows=120, cols=360, cell_size=0.1)
        assert cell_to_world(grid, (119, 359)) == pytest.approx((35.95, 11.95))

    def test_single_cell_with_origin(self):
        grid = GroundGrid(rows=1, cols=1, cell_size=1.0, origin=(3.0, 3.0))
        assert cell_to_world(grid, (0, 0)) == pytest.approx((3.5, 3.5))

    def test_out_of_range_raises(self):
        grid = GroundGrid(rows=2, cols=2, cell_size=0.1)
        with pytest.raises(IndexError):
            cell_to_world(grid, (2, 0))
        with pytest.raises(IndexError):
            cell_to_world(grid, (0, -1))

    def test_row_major_centers_match_cell_to_world(self):
        grid = GroundGrid(rows=3, cols=4, cell_size=0.5, origin=(1.0, -2.0))
        centers = grid.cell_centers_world()
        for r in range(grid.rows):
            for c in range(grid.cols):
                assert centers[r * grid.cols + c] == pytest.approx(cell_to_world(grid, (r, c)))


class TestGridValidation:
    def test_bad_shape(self):
        with pytest.raises(ValueError):
            GroundGrid(rows=0, cols=4, cell_size=0.1)

    def test_bad_cell_size(self):
        with pytest.raises(ValueError):
            GroundGrid(rows=4, cols=4, cell_size=0.0)


class TestViewRayAngle:
    def test_axis_aligned(self):
        assert view_ray_angle(cam(0, 0), (1.0, 0.0)) == pytest.approx(0.0)
        assert view_ray_angle(cam(0, 0), (0.0, 1.0)) == pytest.approx(math.pi / 2)

    def test_diagonal_hand_evaluated(self):
        assert view_ray_angle(cam(1, 1), (0.0, 0.0)) == pytest.approx(-3 * math.pi / 4)

    def test_half_open_range(self):
        # straight along -x must give +pi, not -pi
        assert view_ray_angle(cam(1, 0), (0.0, 0.0)) == pytest.approx(math.pi)

    def test_degenerate_ray(self):
        with pytest.raises(DegenerateRayError):
            view_ray_angle(cam(2.0, 3.0, 10.0), (2.0, 3.0))

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            c = rng.uniform(-10, 10, 2)
            p = c + rng.uniform(0.5, 5.0) * np.array(
                [math.cos(rng.uniform(-3, 3)), math.sin(rng.uniform(-3, 3))])
            theta = rng.uniform(-math.pi, math.pi)
            R = np.array([[math.cos(theta), -math.sin(theta)],
                          [math.sin(theta), math.cos(theta)]])
            b0 = view_ray_angle(cam(*c), p)
            b1 = view_ray_angle(cam(*(R @ c)), R @ p)
            diff = (b1 - b0 - theta) % (2 * math.pi)
            assert min(diff, 2 * math.pi - diff) < 1e-9


class TestCameraDistance:
    def test_three_four_five(self):
        assert camera_distance(cam(0, 0, 3.0), (4.0, 0.0), "full3d") == pytest.approx(5.0)

    def test_planar(self):
        assert camera_distance(cam(0, 0, 3.0), (4.0, 0.0), "ground2d") == pytest.approx(4.0)

    def test_zero(self):
        assert camera_distance(cam(2, 2), (2.0, 2.0), "full3d") == 0.0
        assert camera_distance(cam(2, 2), (2.0, 2.0), "ground2d") == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            camera_distance(cam(0, 0), (1.0, 1.0), "flat")


class TestMinMaxNormalize:
    def test_hand_evaluated(self):
        assert np.allclose(min_max_normalize([2.0, 5.0, 8.0]), [0.0, 0.5, 1.0])

    def test_all_equal(self):
        assert np.allclose(min_max_normalize([7.0, 7.0, 7.0]), [0.0, 0.0, 0.0])

    def test_endpoints(self):
        assert np.allclose(min_max_normalize([0.0, 10.0]), [0.0, 1.0])

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            min_max_normalize([])

    def test_negative_raises(self):
        with pytest.raises(ValueError):
            min_max_normalize([1.0, -0.5])

    def test_idempotent_on_normalized(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            d = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 6)]))
            assert np.allclose(min_max_normalize(d), d, atol=1e-15)

    def test_order_preserving(self):
        rng = np.random.default_rng(6)
        d = rng.uniform(0, 50, 30)
        out = min_max_normalize(d)
        assert np.array_equal(np.argsort(d, kind="stable"), np.argsort(out, kind="stable"))
        assert out.min() == 0.0 and out.max() == 1.0


class TestClosestCamera:
    def test_strictly_closer(self):
        cams = [cam(1, 0, id=1), cam(5, 0, id=2)]
        assert cams[closest_camera(cams, (0.0, 0.0))].id == 1

    def test_tie_breaks_to_lowest_id(self):
        cams = [cam(-1, 0, id=1), cam(1, 0, id=2)]
        assert cams[closest_camera(cams, (0.0, 0.0))].id == 1
        cams_swapped = [cam(1, 0, id=2), cam(-1, 0, id=1)]
        assert cams_swapped[closest_camera(cams_swapped, (0.0, 0.0))].id == 1

    def test_height_matters_in_full3d(self):
        cams = [cam(0, 0, 10.0, id=1), cam(3, 0, 0.0, id=2)]
        assert cams[closest_camera(cams, (4.0, 0.0), "full3d")].id == 2

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            closest_camera([], (0.0, 0.0))

    def test_rigid_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            cams = [cam(*rng.uniform(-8, 8, 2), h=rng.uniform(0, 6), id=i + 1) for i in range(k)]
            p = rng.uniform(-8, 8, 2)
            theta = rng.uniform(-math.pi, math.pi)
            t = rng.uniform(-20, 20, 2)
            R = np.array([[math.cos(theta), -math.sin(theta)],
                          [math.sin(theta), math.cos(theta)]])
            moved = [Camera(id=c.id, position=(*(R @ np.array(c.ground) + t), c.height))
                     for c in cams]
            for mode in ("full3d", "ground2d"):
                assert closest_camera(cams, p, mode) == closest_camera(moved, R @ p + t, mode)


class TestBuildCovariance:
    def test_no_rotation(self):
        spec = build_covariance(0.0, 1.0, 1.2)
        assert np.allclose(spec.S, [[1.0, 0.0], [0.0, 1.2]])

    def test_quarter_turn_hand_rotated(self):
        spec = build_covariance(math.pi / 2, 1.0, 1.2)
        assert np.allclose(spec.S, [[1.2, 0.0], [0.0, 1.0]], atol=1e-15)

    def test_isotropic_invariance(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            beta = rng.uniform(-math.pi, math.pi)
            s2 = rng.uniform(0.1, 4.0)
            spec = build_covariance(beta, s2, s2)
            assert np.max(np.abs(spec.S - s2 * np.eye(2))) < 1e-12

    def test_ray_direction_is_eigenvector(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            beta = rng.uniform(-math.pi, math.pi)
            s1 = rng.uniform(0.2, 3.0)
            s2 = rng.uniform(0.2, 3.0)
            spec = build_covariance(beta, s1, s2)
            u = np.array([math.cos(beta), math.sin(beta)])
            assert abs(u @ spec.S @ u - s1) < 1e-9
            assert np.allclose(spec.S, spec.S.T, atol=1e-12)
            assert np.max(np.abs(spec.S @ spec.S_inv - np.eye(2))) < 1e-9
            eigs = np.sort(np.linalg.eigvalsh(spec.S))
            assert np.allclose(eigs, np.sort([s1, s2]), atol=1e-9)
            assert np.all(eigs > 0)

    def test_rotation_frame_conventions(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            beta = rng.uniform(-math.pi, math.pi)
            frame = view_ray_frame(beta)
            R = frame.rotation
            assert abs(np.linalg.det(R) - 1.0) < 1e-12
            assert np.max(np.abs(R @ R.T - np.eye(2))) < 1e-12
            assert np.allclose(R[:, 0], [math.cos(beta), math.sin(beta)])

    def test_nonpositive_variance_raises(self):
        with pytest.raises(ValueError):
            build_covariance(0.3, 0.0, 1.0)
        with pytest.raises(ValueError):
            build_covariance(0.3, 1.0, -2.0)
