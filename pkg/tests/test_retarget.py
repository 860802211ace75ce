import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagcomp.errors import DegenerateSupport, MappingError
from lagcomp.retarget import (
    RetargetConfig,
    com_offset,
    com_offset_orthogonal,
    config_from_json,
    config_to_json,
    reconstruct_com,
    reconstruct_com_orthogonal,
    retarget_joint,
    retarget_trajectory,
    scale_cartesian,
)
from lagcomp.trajectory import ANGULAR, CARTESIAN, ChannelSpec, Trajectory


@pytest.fixture
def cfg():
    return RetargetConfig(
        joint_map={"h_elbow": "r_elbow", "h_x": "r_x", "h_y": "r_y"},
        q0_human={"h_elbow": 0.3, "h_x": 0.1, "h_y": 0.2},
        q0_robot={"r_elbow": 0.1, "r_x": 0.05, "r_y": 0.4},
        feet_left=(0.0, 0.0),
        feet_right=(0.2, 0.0),
    )


class TestJointRetarget:
    def test_no_motion_keeps_initial_pose(self, cfg):
        assert retarget_joint("h_elbow", 0.3, cfg) == pytest.approx(0.1)

    def test_direct_arithmetic(self, cfg):
        assert retarget_joint("h_elbow", 0.5, cfg) == pytest.approx(0.3)

    def test_sequence_is_shifted_human_sequence(self, cfg):
        rng = np.random.default_rng(0)
        human = rng.normal(0.3, 0.2, 50)
        robot = np.array([retarget_joint("h_elbow", q, cfg) for q in human])
        assert np.allclose(robot, human + (0.1 - 0.3))

    def test_unmapped_channel(self, cfg):
        with pytest.raises(MappingError):
            retarget_joint("h_knee", 0.0, cfg)

    def test_affine_shift_property(self, cfg):
        # differences between retargeted samples equal the human differences
        a = retarget_joint("h_elbow", 0.9, cfg)
        b = retarget_joint("h_elbow", 0.4, cfg)
        assert a - b == pytest.approx(0.5)


class TestCartesianScale:
    def test_ten_cm_becomes_four(self, cfg):
        p0 = np.array([0.1, 0.2])
        moved = scale_cartesian(p0 + [0.10, 0.0], cfg, ("h_x", "h_y"))
        rest = scale_cartesian(p0, cfg, ("h_x", "h_y"))
        assert moved[0] - rest[0] == pytest.approx(0.04)

    def test_initial_pose_maps_to_initial_pose(self, cfg):
        out = scale_cartesian(np.array([0.1, 0.2]), cfg, ("h_x", "h_y"))
        assert np.allclose(out, [0.05, 0.4])

    def test_unit_scale_preserves_distances(self):
        cfg = RetargetConfig(
            joint_map={"h_x": "r_x"},
            q0_human={"h_x": 0.0},
            q0_robot={"r_x": 1.0},
            scale=1.0,
        )
        a = scale_cartesian(np.array([0.3]), cfg, ("h_x",))
        b = scale_cartesian(np.array([0.8]), cfg, ("h_x",))
        assert abs(b[0] - a[0]) == pytest.approx(0.5)

    def test_contracts_displacements_by_scale(self, cfg):
        rng = np.random.default_rng(1)
        p, q = rng.normal(size=2), rng.normal(size=2)
        dp = scale_cartesian(p, cfg) - scale_cartesian(q, cfg)
        assert np.allclose(dp, cfg.scale * (p - q))


class TestComOffset:
    def test_midpoint_is_half(self, cfg):
        assert com_offset(np.array([0.1, 0.0]), cfg) == pytest.approx(0.5)

    def test_left_foot_is_zero(self, cfg):
        assert com_offset(np.array([0.0, 0.0]), cfg) == pytest.approx(0.0)

    def test_hand_computed_projection(self, cfg):
        # feet (0,0)-(0.2,0); com (0.15, 0.3): dot = 0.15*0.2 / 0.04 = 0.75
        assert com_offset(np.array([0.15, 0.3]), cfg) == pytest.approx(0.75)

    def test_not_clamped(self, cfg):
        assert com_offset(np.array([0.4, 0.0]), cfg) == pytest.approx(2.0)

    def test_degenerate_feet(self):
        with pytest.raises(DegenerateSupport):
            RetargetConfig(
                joint_map={}, q0_human={}, q0_robot={},
                feet_left=(0.1, 0.1), feet_right=(0.1, 0.1),
            )

    def test_reconstruct_endpoints(self):
        left, right = (1.0, 0.0), (1.4, 0.0)
        assert np.allclose(reconstruct_com(0.5, left, right), [1.2, 0.0])
        assert np.allclose(reconstruct_com(1.0, left, right), [1.4, 0.0])

    def test_reconstruct_clamps(self):
        left, right = (0.0, 0.0), (1.0, 0.0)
        assert np.allclose(reconstruct_com(1.7, left, right), [1.0, 0.0])
        assert np.allclose(reconstruct_com(-0.2, left, right), [0.0, 0.0])

    def test_round_trip_preserves_ratio_on_wider_robot(self, cfg):
        # robot feet twice as wide as the operator's
        robot_left, robot_right = (0.0, 0.0), (0.4, 0.0)
        o = com_offset(np.array([0.15, 0.1]), cfg)
        point = reconstruct_com(o, robot_left, robot_right)
        robot_cfg = RetargetConfig(
            joint_map={}, q0_human={}, q0_robot={},
            feet_left=robot_left, feet_right=robot_right,
        )
        assert com_offset(point, robot_cfg) == pytest.approx(o, abs=1e-12)

    @given(st.floats(0.0, 1.0))
    def test_offset_reconstruct_identity(self, o):
        left, right = (0.3, -0.2), (0.7, 0.5)
        cfg = RetargetConfig(
            joint_map={}, q0_human={}, q0_robot={},
            feet_left=left, feet_right=right,
        )
        assert com_offset(reconstruct_com(o, left, right), cfg) == pytest.approx(
            o, abs=1e-12
        )

    def test_orthogonal_offset_round_trip(self, cfg):
        d = com_offset_orthogonal(np.array([0.1, 0.05]), cfg)
        back = reconstruct_com_orthogonal(d, cfg.feet_left, cfg.feet_right, cfg.perp_bounds)
        assert back == pytest.approx(0.05)


class TestTrajectoryRetarget:
    def test_kinds_drive_the_rule(self, cfg):
        channels = (
            ChannelSpec("h_x", CARTESIAN),
            ChannelSpec("h_elbow", ANGULAR),
        )
        times = np.array([0.0, 0.1])
        values = np.array([[0.1, 0.3], [0.2, 0.5]])
        out = retarget_trajectory(Trajectory(channels, times, values, 10.0), cfg)
        assert out.channel_names() == ("r_x", "r_elbow")
        # Cartesian: 0.05 + 0.4*(0.2-0.1); angular: 0.1 + (0.5-0.3)
        assert out.values[1, 0] == pytest.approx(0.09)
        assert out.values[1, 1] == pytest.approx(0.3)

    def test_injective_map_enforced(self):
        with pytest.raises(MappingError):
            RetargetConfig(
                joint_map={"a": "x", "b": "x"}, q0_human={}, q0_robot={}
            )

    def test_json_round_trip(self, cfg):
        back = config_from_json(config_to_json(cfg))
        assert back.joint_map == cfg.joint_map
        assert back.scale == cfg.scale
        assert back.feet_left == cfg.feet_left
        assert back.q0_human == cfg.q0_human
