import json
import warnings

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.spatial.transform import Rotation

from posefuse3d_ki.body import (BodyParams, BodyTemplate, Camera,
                                PROJECTION_SENTINEL, blended_rotations,
                                body_state, default_camera, default_template,
                                forward_kinematics, interpolate_params,
                                project, quat_from_axis_angle, quat_identity,
                                quat_slerp)


def fk_oracle(params, template):
    """Brute-force oracle: explicit 4x4 matrix chain via scipy rotations."""
    J = template.n_joints
    G = [None] * J
    for j in range(J):
        local = np.eye(4)
        q = params.pose[j]
        local[:3, :3] = Rotation.from_quat(
            [q[1], q[2], q[3], q[0]]).as_matrix()
        p = template.parent[j]
        local[:3, 3] = template.rest_joints[j] - (
            template.rest_joints[p] if p >= 0 else 0.0)
        G[j] = local if p < 0 else G[p] @ local
    joints = np.stack([g[:3, 3] for g in G]) + params.root_translation

    v_shaped = (template.rest_vertices + template.shape_basis @ params.shape
                + template.expression_basis @ params.expression)
    verts = np.zeros_like(v_shaped)
    for j in range(J):
        A = G[j] @ np.block([[np.eye(3), -template.rest_joints[j][:, None]],
                             [np.zeros((1, 3)), np.ones((1, 1))]])
        homo = np.concatenate([v_shaped, np.ones((len(v_shaped), 1))], axis=1)
        verts += template.skinning_weights[:, j:j + 1] * (homo @ A.T)[:, :3]
    return joints, verts + params.root_translation


def random_params(template, rng, amp=1.0):
    pose = np.stack([quat_from_axis_angle(rng.normal(size=3),
                                          rng.uniform(-amp, amp))
                     for _ in range(template.n_joints)])
    return BodyParams(pose=pose,
                      shape=rng.normal(0, 0.5, template.n_shape),
                      expression=rng.normal(0, 0.5, template.n_expression),
                      root_translation=rng.uniform(-0.5, 0.5, 3))


# -- forward kinematics --------------------------------------------------------

def test_identity_pose_reproduces_rest(template):
    p = BodyParams.identity(template)
    joints, verts = forward_kinematics(p, template)
    assert np.allclose(joints, template.rest_joints)
    assert np.allclose(verts, template.rest_vertices)


def test_one_hot_shape_adds_basis_column(template):
    for i in (0, template.n_shape - 1):
        p = BodyParams.identity(template)
        p.shape[i] = 1.0
        _, verts = forward_kinematics(p, template)
        assert np.allclose(verts,
                           template.rest_vertices + template.shape_basis[:, :, i])


def test_two_joint_chain_rotation():
    # Parent at origin carrying a 90 degree z-rotation; child rest offset
    # (1,0,0) must land at (0,1,0).
    template = BodyTemplate(
        rest_joints=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        parent=np.array([-1, 0]),
        rest_vertices=np.array([[1.0, 0.0, 0.0]]),
        skinning_weights=np.array([[1.0, 0.0]]),
        shape_basis=np.zeros((1, 3, 1)),
        expression_basis=np.zeros((1, 3, 1)),
        vertex_colors=np.array([[1.0, 0.0, 0.0]]),
    )
    p = BodyParams(pose=np.stack([quat_from_axis_angle([0, 0, 1], np.pi / 2),
                                  quat_identity(1)[0]]),
                   shape=np.zeros(1), expression=np.zeros(1),
                   root_translation=np.zeros(3))
    joints, verts = forward_kinematics(p, template)
    assert np.allclose(joints[1], [0.0, 1.0, 0.0], atol=1e-12)
    oj, ov = fk_oracle(p, template)
    assert np.allclose(joints, oj, atol=1e-12)
    assert np.allclose(verts, ov, atol=1e-12)


def test_fk_matches_matrix_chain_oracle(template):
    rng = np.random.default_rng(7)
    for _ in range(5):
        p = random_params(template, rng)
        joints, verts = forward_kinematics(p, template)
        oj, ov = fk_oracle(p, template)
        assert np.allclose(joints, oj, atol=1e-10)
        assert np.allclose(verts, ov, atol=1e-10)


def test_fk_dimension_mismatch_raises(template):
    p = BodyParams.identity(template)
    p.shape = np.zeros(template.n_shape + 1)
    with pytest.raises(ValueError):
        forward_kinematics(p, template)
    p = BodyParams.identity(template)
    p.pose = quat_identity(template.n_joints - 1)
    with pytest.raises(ValueError):
        forward_kinematics(p, template)


def test_non_unit_quaternion_rejected(template):
    p = BodyParams.identity(template)
    p.pose[0, 0] = 1.1
    with pytest.raises(ValueError):
        p.validate(template)


# -- projection -----------------------------------------------------------------

def cam_simple():
    return Camera(focal=(100.0, 100.0), principal=(64.0, 64.0),
                  resolution=(128, 128))


def test_project_optical_axis():
    pts, depth = project(np.array([[0.0, 0.0, 2.0]]), cam_simple())
    assert np.allclose(pts[0], [64.0, 64.0])
    assert depth[0] == 2.0


def test_project_formula():
    pts, _ = project(np.array([[1.0, 0.0, 2.0]]), cam_simple())
    assert np.isclose(pts[0, 0], 100.0 * 1.0 / 2.0 + 64.0)  # u = 114


def test_project_behind_camera():
    pts, depth = project(np.array([[0.0, 0.0, -1.0]]), cam_simple())
    assert depth[0] == -1.0


def test_project_degenerate_z_sentinel():
    pts, depth = project(np.array([[1.0, 1.0, 1e-12]]), cam_simple())
    assert depth[0] == 0.0
    assert np.all(pts[0] == PROJECTION_SENTINEL)


# -- interpolation ----------------------------------------------------------------

def test_interpolate_endpoints_exact(template):
    rng = np.random.default_rng(0)
    p0, p1 = random_params(template, rng), random_params(template, rng)
    r0 = interpolate_params(p0, p1, 0.0)
    r1 = interpolate_params(p0, p1, 1.0)
    assert np.array_equal(r0.pose, p0.pose)
    assert np.array_equal(r0.root_translation, p0.root_translation)
    assert np.array_equal(r1.pose, p1.pose)
    assert np.array_equal(r1.shape, p1.shape)


def test_slerp_midpoint_half_angle(template):
    p0 = BodyParams.identity(template)
    p1 = BodyParams.identity(template)
    p1.pose = np.stack([quat_from_axis_angle([0, 0, 1], np.pi / 2)]
                       * template.n_joints)
    mid = interpolate_params(p0, p1, 0.5)
    expect = quat_from_axis_angle([0, 0, 1], np.pi / 4)
    assert np.allclose(mid.pose, np.stack([expect] * template.n_joints),
                       atol=1e-12)


def test_lerp_translation(template):
    p0 = BodyParams.identity(template)
    p1 = BodyParams.identity(template)
    p1.root_translation = np.array([2.0, 0.0, 0.0])
    r = interpolate_params(p0, p1, 0.25)
    assert np.allclose(r.root_translation, [0.5, 0.0, 0.0])


def test_interpolate_result_valid(template):
    rng = np.random.default_rng(1)
    p0, p1 = random_params(template, rng), random_params(template, rng)
    for t in (0.1, 0.5, 0.9):
        interpolate_params(p0, p1, t).validate(template)


def test_antipodal_slerp_warns():
    q = quat_from_axis_angle([0, 1, 0], 0.3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = quat_slerp(q, -q, 0.5)
    assert any("antipodal" in str(w.message) for w in caught)
    assert np.isclose(np.linalg.norm(out), 1.0)


def test_interpolate_dimension_mismatch(template):
    p0 = BodyParams.identity(template)
    p1 = BodyParams.identity(template)
    p1.shape = np.zeros(template.n_shape + 2)
    with pytest.raises(ValueError):
        interpolate_params(p0, p1, 0.5)


# -- invariants -------------------------------------------------------------------

def test_rigid_motion_equivariance(template):
    """World-transforming the body and compensating the camera leaves the
    projected joints unchanged (tolerance 1e-5)."""
    rng = np.random.default_rng(3)
    cam = default_camera((64, 64))
    for _ in range(3):
        p = random_params(template, rng)
        base = body_state(p, template, cam)

        Rm = Rotation.from_rotvec(rng.normal(size=3) * 0.5).as_matrix()
        tm = rng.uniform(-0.5, 0.5, 3)
        q_m = Rotation.from_matrix(Rm).as_quat()  # x,y,z,w
        q_m = np.array([q_m[3], q_m[0], q_m[1], q_m[2]])
        p2 = p.copy()
        from posefuse3d_ki.body import quat_multiply, quat_normalize
        p2.pose[0] = quat_normalize(quat_multiply(q_m, p.pose[0]))
        p2.root_translation = Rm @ p.root_translation + tm
        # FK rotates about the root joint (origin in the rest template), so
        # the consistent camera compensation is R' = R Rm^T, t' = t - R' tm.
        cam2 = Camera(focal=cam.focal, principal=cam.principal,
                      resolution=cam.resolution,
                      rotation=cam.rotation @ Rm.T,
                      translation=cam.translation - cam.rotation @ Rm.T @ tm)
        moved = body_state(p2, template, cam2)
        assert np.allclose(moved.joints2d, base.joints2d, atol=1e-5)
        assert np.allclose(moved.vertices2d, base.vertices2d, atol=1e-5)


def test_skinning_convexity_hull_membership():
    """Each skinned vertex is inside the convex hull of its bone-transformed
    copies (checked by LP feasibility on a small template)."""
    rng = np.random.default_rng(5)
    template = default_template()
    # Small vertex subset keeps the LP cheap.
    idx = rng.choice(template.n_vertices, size=12, replace=False)
    p = random_params(template, rng)
    _, verts = forward_kinematics(p, template)

    from posefuse3d_ki.body import quat_to_matrix
    J = template.n_joints
    R = quat_to_matrix(p.pose)
    G = np.zeros((J, 4, 4))
    for j in range(J):
        local = np.eye(4)
        local[:3, :3] = R[j]
        par = template.parent[j]
        local[:3, 3] = template.rest_joints[j] - (
            template.rest_joints[par] if par >= 0 else 0.0)
        G[j] = local if par < 0 else G[par] @ local

    v_shaped = (template.rest_vertices + template.shape_basis @ p.shape
                + template.expression_basis @ p.expression)
    for i in idx:
        copies = []
        for j in range(J):
            A_rot = G[j, :3, :3]
            A_t = G[j, :3, 3] - A_rot @ template.rest_joints[j]
            copies.append(A_rot @ v_shaped[i] + A_t + p.root_translation)
        copies = np.stack(copies)          # (J, 3)
        # LP: find lambda >= 0, sum 1, copies^T lambda = vertex.
        A_eq = np.vstack([copies.T, np.ones((1, J))])
        b_eq = np.concatenate([verts[i], [1.0]])
        res = linprog(np.zeros(J), A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * J, method="highs")
        assert res.success, f"vertex {i} outside hull of its bone copies"


def test_slerp_self_identity(template):
    rng = np.random.default_rng(9)
    p = random_params(template, rng)
    for t in (0.0, 0.3, 0.7, 1.0):
        r = interpolate_params(p, p, t)
        assert np.allclose(r.pose, p.pose, atol=1e-12)
        assert np.allclose(r.shape, p.shape, atol=1e-15)


def test_project_fk_deterministic(template, camera64):
    rng = np.random.default_rng(11)
    p = random_params(template, rng)
    a = body_state(p, template, camera64)
    b = body_state(p, template, camera64)
    assert np.array_equal(a.joints2d, b.joints2d)
    assert np.array_equal(a.vertices2d, b.vertices2d)
    assert np.array_equal(a.vertices3d, b.vertices3d)


# -- template / serialization ------------------------------------------------------

def test_template_invariants(template):
    template.validate()
    assert template.parent[0] == -1
    assert np.all(template.parent[1:] < np.arange(1, template.n_joints))
    sums = template.skinning_weights.sum(axis=1)
    assert np.all(np.abs(sums - 1.0) <= 1e-6)


def test_template_json_roundtrip(template, tmp_path):
    path = tmp_path / "template.json"
    template.save(path)
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["template_version"] == 1
    back = BodyTemplate.load(path)
    assert np.array_equal(back.rest_vertices, template.rest_vertices)
    assert np.array_equal(back.skinning_weights, template.skinning_weights)
    assert back.head_cluster == template.head_cluster


def test_template_validation_rejects_bad_tree(template):
    bad = BodyTemplate(
        rest_joints=template.rest_joints.copy(),
        parent=template.parent.copy(),
        rest_vertices=template.rest_vertices.copy(),
        skinning_weights=template.skinning_weights.copy(),
        shape_basis=template.shape_basis.copy(),
        expression_basis=template.expression_basis.copy(),
        vertex_colors=template.vertex_colors.copy(),
    )
    bad.parent[1] = 5  # parent after child
    with pytest.raises(ValueError):
        bad.validate()


def test_template_validation_rejects_duplicate_colors(template):
    bad = BodyTemplate(
        rest_joints=template.rest_joints.copy(),
        parent=template.parent.copy(),
        rest_vertices=template.rest_vertices.copy(),
        skinning_weights=template.skinning_weights.copy(),
        shape_basis=template.shape_basis.copy(),
        expression_basis=template.expression_basis.copy(),
        vertex_colors=template.vertex_colors.copy(),
    )
    bad.vertex_colors[1] = bad.vertex_colors[0]
    with pytest.raises(ValueError):
        bad.validate()


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(focal=(0.0, 10.0), principal=(1, 1), resolution=(8, 8))
    with pytest.raises(ValueError):
        Camera(focal=(10.0, 10.0), principal=(1, 1), resolution=(8, -8))
