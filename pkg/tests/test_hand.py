import copy

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from contactgrasp.errors import ConfigError
from contactgrasp.hand import (clamp_to_limits, fingertip_jacobian,
                               forward_kinematics, load_hand_model,
                               position_groups)
import oracles


def planar_config():
    return {
        "name": "planar",
        "middle_finger_length": 0.07,
        "joints": [
            {"name": "j1", "parent": "", "origin_xyz": [0, 0, 0],
             "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
            {"name": "j2", "parent": "j1", "origin_xyz": [0.04, 0, 0],
             "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
        ],
        "fingertips": {"index": {"link": "j2", "offset": [0.03, 0, 0]}},
        "finger_order": ["index"],
        "intermediate_joints": ["j2"],
    }


# ----------------------------------------------------------------- model loading

def test_bundled_planar_hand(hand2):
    assert hand2.n_joints == 2
    assert hand2.n_fingers == 1
    assert hand2.middle_finger_length == pytest.approx(0.07)


def test_bundled_five_finger_hand(hand16):
    assert hand16.n_joints == 16
    assert hand16.n_fingers == 5
    assert list(hand16.finger_order) == ["thumb", "index", "middle", "ring", "little"]
    assert np.all(hand16.lower <= hand16.upper)


def test_limits_reversed_names_the_joint():
    cfg = planar_config()
    cfg["joints"][1]["limits"] = [1.0, -1.0]
    with pytest.raises(ConfigError, match=r"joints\[1\]"):
        load_hand_model(cfg)


def test_duplicate_joint_name_rejected():
    cfg = planar_config()
    cfg["joints"][1]["name"] = "j1"
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


def test_unknown_parent_rejected():
    cfg = planar_config()
    cfg["joints"][1]["parent"] = "nonexistent"
    with pytest.raises(ConfigError, match="declared earlier"):
        load_hand_model(cfg)


def test_zero_axis_rejected():
    cfg = planar_config()
    cfg["joints"][0]["axis"] = [0, 0, 0]
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


def test_fingertip_on_unknown_link_rejected():
    cfg = planar_config()
    cfg["fingertips"]["index"]["link"] = "elsewhere"
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


def test_finger_order_must_match_fingertips():
    cfg = planar_config()
    cfg["finger_order"] = ["index", "thumb"]
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


def test_unknown_intermediate_joint_rejected():
    cfg = planar_config()
    cfg["intermediate_joints"] = ["j9"]
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


def test_nonpositive_finger_length_rejected():
    cfg = planar_config()
    cfg["middle_finger_length"] = 0.0
    with pytest.raises(ConfigError):
        load_hand_model(cfg)


# ------------------------------------------------------------ forward kinematics

def test_straight_chain_tip(hand2):
    tips = forward_kinematics(hand2, np.zeros(2))
    assert np.allclose(tips, [[0.07, 0, 0]], atol=1e-12)


def test_first_joint_quarter_turn(hand2):
    tips = forward_kinematics(hand2, np.array([np.pi / 2, 0.0]))
    assert np.allclose(tips, [[0, 0.07, 0]], atol=1e-12)


def test_elbow_bend(hand2):
    tips = forward_kinematics(hand2, np.array([0.0, np.pi / 2]))
    assert np.allclose(tips, [[0.04, 0.03, 0]], atol=1e-12)


def test_fk_matches_transform_chain_oracle(hand16):
    rng = np.random.default_rng(31)
    for _ in range(50):
        q = hand16.lower + rng.random(16) * (hand16.upper - hand16.lower)
        got = forward_kinematics(hand16, q)
        want = oracles.fk_rotvec_chain(hand16, q)
        assert np.max(np.abs(got - want)) < 1e-9


def test_fk_base_equivariance(hand16):
    rng = np.random.default_rng(32)
    for _ in range(10):
        q = hand16.lower + rng.random(16) * (hand16.upper - hand16.lower)
        quat = rng.normal(size=4)
        rot = Rotation.from_quat(quat / np.linalg.norm(quat)).as_matrix()
        t = rng.normal(scale=0.2, size=3)
        local = forward_kinematics(hand16, q)
        world = forward_kinematics(hand16, q, base_rotation=rot,
                                   base_translation=t)
        assert np.allclose(world, local @ rot.T + t, atol=1e-12)


# ------------------------------------------------------------------- jacobian

def test_planar_jacobian_column_norms(hand2):
    jac = fingertip_jacobian(hand2, np.zeros(2))[0]
    assert abs(np.linalg.norm(jac[:, 0]) - 0.07) < 1e-12
    assert abs(np.linalg.norm(jac[:, 1]) - 0.03) < 1e-12


def test_jacobian_matches_finite_differences(hand16):
    rng = np.random.default_rng(33)
    for _ in range(20):
        q = hand16.lower + rng.random(16) * (hand16.upper - hand16.lower)
        jac = fingertip_jacobian(hand16, q)
        fd = oracles.fd_jacobian(hand16, q, forward_kinematics)
        scale = max(np.max(np.abs(fd)), 1e-12)
        assert np.max(np.abs(jac - fd)) / scale < 1e-4


def test_jacobian_off_chain_columns_zero(hand16):
    rng = np.random.default_rng(34)
    q = hand16.lower + rng.random(16) * (hand16.upper - hand16.lower)
    jac = fingertip_jacobian(hand16, q)
    for f in range(hand16.n_fingers):
        on_chain = set(hand16.chains[f])
        for j in range(hand16.n_joints):
            if j not in on_chain:
                assert np.all(jac[f, :, j] == 0.0)


# ------------------------------------------------------------------- clamping

def test_clamp_inside_unchanged(hand16):
    q = hand16.midrange()
    assert np.array_equal(clamp_to_limits(hand16, q), q)


def test_clamp_saturates(hand16):
    q = hand16.upper + 0.5
    assert np.array_equal(clamp_to_limits(hand16, q), hand16.upper)
    q = np.full(16, -1e9)
    assert np.array_equal(clamp_to_limits(hand16, q), hand16.lower)


def test_clamp_idempotent(hand16):
    rng = np.random.default_rng(35)
    q = rng.normal(scale=3.0, size=16)
    once = clamp_to_limits(hand16, q)
    assert np.array_equal(clamp_to_limits(hand16, once), once)


# -------------------------------------------------------------- position groups

def test_position_groups_span_non_thumb_fingers(hand16):
    groups = position_groups(hand16)
    assert len(groups) == 3  # knuckle / proximal / middle rows
    thumb = set(hand16.chains[0])
    for g in groups:
        assert len(g) == 4
        assert not thumb & set(g)


def test_position_groups_require_equal_chains():
    cfg = planar_config()
    cfg["fingertips"] = {
        "index": {"link": "j2", "offset": [0.03, 0, 0]},
        "middle": {"link": "j1", "offset": [0.05, 0, 0]},
    }
    cfg["finger_order"] = ["index", "middle"]
    model = load_hand_model(cfg)
    with pytest.raises(ConfigError):
        position_groups(model, exclude=None)
