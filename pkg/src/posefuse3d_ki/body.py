"""Parametric articulated body: blend shapes + linear blend skinning + pinhole camera.

The body is a small SMPL-X-like template (J=16 joints, V=600 vertices).
Pose is one unit quaternion per joint (w, x, y, z), shape / expression are
linear blend-shape coefficients, and a root translation places the body in
the world. All functions here are pure and operate on numpy arrays.
"""

from __future__ import annotations

import colorsys
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

TEMPLATE_VERSION = 1

# Projected coordinate assigned to points with |z_cam| <= Z_EPS. Far outside
# any image so downstream rasterization culls them without special casing.
PROJECTION_SENTINEL = -1.0e6
Z_EPS = 1e-9


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z convention)
# ---------------------------------------------------------------------------

def quat_identity(n: int) -> np.ndarray:
    q = np.zeros((n, 4), dtype=np.float64)
    q[:, 0] = 1.0
    return q


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    q = np.empty(4, dtype=np.float64)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * axis
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) from unit quaternions (..., 4)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion from a single 3x3 rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation of one quaternion pair.

    Nearly-antipodal inputs collapse to linear interpolation + renormalization
    (the two quaternions encode the same rotation up to sign, so the geodesic
    is degenerate); a warning is emitted in that case.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    d = float(np.dot(q0, q1))
    if d < -1.0 + 1e-7:
        warnings.warn("slerp: antipodal quaternions, falling back to nlerp")
        q = (1.0 - t) * q0 + t * (-q1)
        return quat_normalize(q)
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-9:
        # Nearly identical: nlerp is exact to working precision and stable.
        return quat_normalize((1.0 - t) * q0 + t * q1)
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) * q0 + np.sin(t * theta) * q1) / s


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class BodyParams:
    """Pose / shape / expression of one body at one instant."""

    pose: np.ndarray             # (J, 4) unit quaternions
    shape: np.ndarray            # (B,)
    expression: np.ndarray       # (E,)
    root_translation: np.ndarray  # (3,) meters, world frame

    @property
    def n_joints(self) -> int:
        return self.pose.shape[0]

    def copy(self) -> "BodyParams":
        return BodyParams(self.pose.copy(), self.shape.copy(),
                          self.expression.copy(), self.root_translation.copy())

    def validate(self, template: "BodyTemplate") -> None:
        if self.pose.shape != (template.n_joints, 4):
            raise ValueError(
                f"pose shape {self.pose.shape} does not match template "
                f"({template.n_joints} joints)")
        if self.shape.shape != (template.n_shape,):
            raise ValueError(f"shape has {self.shape.shape[0]} coefficients, "
                             f"template expects {template.n_shape}")
        if self.expression.shape != (template.n_expression,):
            raise ValueError(
                f"expression has {self.expression.shape[0]} coefficients, "
                f"template expects {template.n_expression}")
        norms = np.linalg.norm(self.pose, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise ValueError("pose quaternions must have unit norm (1e-6)")
        if not (np.all(np.isfinite(self.shape))
                and np.all(np.isfinite(self.expression))
                and np.all(np.isfinite(self.root_translation))):
            raise ValueError("shape/expression/translation must be finite")

    @staticmethod
    def identity(template: "BodyTemplate") -> "BodyParams":
        return BodyParams(
            pose=quat_identity(template.n_joints),
            shape=np.zeros(template.n_shape),
            expression=np.zeros(template.n_expression),
            root_translation=np.zeros(3),
        )

    def to_json(self) -> dict:
        return {
            "pose": self.pose.tolist(),
            "shape": self.shape.tolist(),
            "expression": self.expression.tolist(),
            "root_translation": self.root_translation.tolist(),
        }

    @staticmethod
    def from_json(d: dict) -> "BodyParams":
        return BodyParams(
            pose=np.asarray(d["pose"], dtype=np.float64),
            shape=np.asarray(d["shape"], dtype=np.float64),
            expression=np.asarray(d["expression"], dtype=np.float64),
            root_translation=np.asarray(d["root_translation"], dtype=np.float64),
        )


@dataclass
class BodyTemplate:
    """Rest-pose body: joint tree, vertices, skinning weights, blend bases."""

    rest_joints: np.ndarray       # (J, 3)
    parent: np.ndarray            # (J,) int, parent[0] == -1
    rest_vertices: np.ndarray     # (V, 3)
    skinning_weights: np.ndarray  # (V, J) row-stochastic
    shape_basis: np.ndarray       # (V, 3, B)
    expression_basis: np.ndarray  # (V, 3, E)
    vertex_colors: np.ndarray     # (V, 3) in [0, 1], pairwise distinct
    joint_names: tuple = ()
    head_cluster: tuple = ()      # joint ids merged into one point in pose viz

    @property
    def n_joints(self) -> int:
        return self.rest_joints.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.rest_vertices.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def n_expression(self) -> int:
        return self.expression_basis.shape[2]

    @property
    def bones(self) -> list:
        """(parent, child) pairs for every non-root joint."""
        return [(int(self.parent[j]), j) for j in range(1, self.n_joints)
                if self.parent[j] >= 0]

    def validate(self) -> None:
        J = self.n_joints
        if self.parent[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not 0 <= self.parent[j] < j:
                raise ValueError("parent index must precede child (tree order)")
        if np.any(self.skinning_weights < 0):
            raise ValueError("skinning weights must be non-negative")
        sums = self.skinning_weights.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-6):
            raise ValueError("skinning weight rows must sum to 1 (1e-6)")
        flat = np.ascontiguousarray(self.vertex_colors)
        view = flat.view([("", flat.dtype)] * 3)
        if len(np.unique(view)) != self.n_vertices:
            raise ValueError("vertex colors must be pairwise distinct")

    def to_json(self) -> dict:
        return {
            "template_version": TEMPLATE_VERSION,
            "rest_joints": self.rest_joints.tolist(),
            "parent": self.parent.tolist(),
            "rest_vertices": self.rest_vertices.tolist(),
            "skinning_weights": self.skinning_weights.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "expression_basis": self.expression_basis.tolist(),
            "vertex_colors": self.vertex_colors.tolist(),
            "joint_names": list(self.joint_names),
            "head_cluster": list(self.head_cluster),
        }

    @staticmethod
    def from_json(d: dict) -> "BodyTemplate":
        if d.get("template_version") != TEMPLATE_VERSION:
            raise ValueError(f"unsupported template_version "
                             f"{d.get('template_version')!r}")
        t = BodyTemplate(
            rest_joints=np.asarray(d["rest_joints"], dtype=np.float64),
            parent=np.asarray(d["parent"], dtype=np.int64),
            rest_vertices=np.asarray(d["rest_vertices"], dtype=np.float64),
            skinning_weights=np.asarray(d["skinning_weights"], dtype=np.float64),
            shape_basis=np.asarray(d["shape_basis"], dtype=np.float64),
            expression_basis=np.asarray(d["expression_basis"], dtype=np.float64),
            vertex_colors=np.asarray(d["vertex_colors"], dtype=np.float64),
            joint_names=tuple(d.get("joint_names", ())),
            head_cluster=tuple(d.get("head_cluster", ())),
        )
        t.validate()
        return t

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @staticmethod
    def load(path) -> "BodyTemplate":
        with open(path) as f:
            return BodyTemplate.from_json(json.load(f))


@dataclass
class Camera:
    """Pinhole camera; `rotation`/`translation` map world -> camera frame.

    Points in front of the camera have positive camera-frame z.
    """

    focal: tuple            # (fx, fy) pixels
    principal: tuple        # (cx, cy) pixels
    resolution: tuple       # (W, H) pixels
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        fx, fy = self.focal
        if fx <= 0 or fy <= 0:
            raise ValueError("focal lengths must be positive")
        w, h = self.resolution
        if int(w) != w or int(h) != h or w <= 0 or h <= 0:
            raise ValueError("resolution must be positive integers")
        self.resolution = (int(w), int(h))

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def to_json(self) -> dict:
        return {
            "focal": list(self.focal),
            "principal": list(self.principal),
            "resolution": list(self.resolution),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @staticmethod
    def from_json(d: dict) -> "Camera":
        return Camera(
            focal=tuple(d["focal"]),
            principal=tuple(d["principal"]),
            resolution=tuple(d["resolution"]),
            rotation=np.asarray(d["rotation"], dtype=np.float64),
            translation=np.asarray(d["translation"], dtype=np.float64),
        )


@dataclass
class BodyState:
    """Posed 3D joints/vertices and their projections under one camera."""

    joints3d: np.ndarray     # (J, 3)
    vertices3d: np.ndarray   # (V, 3)
    joints2d: np.ndarray     # (J, 2) pixels
    vertices2d: np.ndarray   # (V, 2) pixels
    joint_depth: np.ndarray  # (J,) camera-frame z
    vertex_depth: np.ndarray  # (V,)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def forward_kinematics(params: BodyParams, template: BodyTemplate):
    """Pose the template: returns (joints3d (J,3), vertices3d (V,3)).

    Joints compose per-joint rotations down the parent chain from the rest
    joints; vertices are linear-blend-skinned from the shaped rest mesh.
    Root translation is added to all outputs.
    """
    params.validate(template)
    J = template.n_joints
    R = quat_to_matrix(params.pose)          # (J, 3, 3) local rotations
    rest = template.rest_joints

    # Global 4x4 transform per joint: G[j] = G[parent] @ T(offset) @ R(pose_j)
    G = np.zeros((J, 4, 4), dtype=np.float64)
    for j in range(J):
        local = np.eye(4)
        local[:3, :3] = R[j]
        if template.parent[j] < 0:
            local[:3, 3] = rest[j]
            G[j] = local
        else:
            p = template.parent[j]
            local[:3, 3] = rest[j] - rest[p]
            G[j] = G[p] @ local
    joints3d = G[:, :3, 3].copy()

    # Skinning transforms relative to the rest pose.
    A_rot = G[:, :3, :3]                           # (J, 3, 3)
    A_trans = G[:, :3, 3] - np.einsum("jab,jb->ja", A_rot, rest)  # (J, 3)

    v_shaped = (template.rest_vertices
                + template.shape_basis @ params.shape
                + template.expression_basis @ params.expression)   # (V, 3)

    # Per-bone rigid copies, blended with the row-stochastic weights.
    per_joint = np.einsum("jab,vb->vja", A_rot, v_shaped) + A_trans[None, :, :]
    vertices3d = np.einsum("vj,vja->va", template.skinning_weights, per_joint)

    joints3d += params.root_translation
    vertices3d += params.root_translation
    return joints3d, vertices3d


def blended_rotations(params: BodyParams, template: BodyTemplate) -> np.ndarray:
    """Per-vertex skinning rotation (V,3,3): weight-blended bone rotations."""
    J = template.n_joints
    R = quat_to_matrix(params.pose)
    G_rot = np.zeros((J, 3, 3), dtype=np.float64)
    for j in range(J):
        if template.parent[j] < 0:
            G_rot[j] = R[j]
        else:
            G_rot[j] = G_rot[template.parent[j]] @ R[j]
    return np.einsum("vj,jab->vab", template.skinning_weights, G_rot)


def project(points3d: np.ndarray, camera: Camera):
    """Pinhole projection: returns (points2d (N,2), depth (N,)).

    depth is camera-frame z (negative behind the camera). Points with
    |z| <= 1e-9 get sentinel 2D coordinates and depth 0; callers must treat
    them as invisible.
    """
    pts = np.atleast_2d(np.asarray(points3d, dtype=np.float64))
    cam = camera.world_to_camera(pts)
    z = cam[:, 2]
    degenerate = np.abs(z) <= Z_EPS
    z_safe = np.where(degenerate, 1.0, z)
    fx, fy = camera.focal
    cx, cy = camera.principal
    u = fx * cam[:, 0] / z_safe + cx
    v = fy * cam[:, 1] / z_safe + cy
    pts2d = np.stack([u, v], axis=1)
    pts2d[degenerate] = PROJECTION_SENTINEL
    depth = np.where(degenerate, 0.0, z)
    return pts2d, depth


def body_state(params: BodyParams, template: BodyTemplate,
               camera: Camera) -> BodyState:
    """forward_kinematics + projection bundled into one BodyState."""
    joints3d, vertices3d = forward_kinematics(params, template)
    joints2d, jdepth = project(joints3d, camera)
    vertices2d, vdepth = project(vertices3d, camera)
    return BodyState(joints3d, vertices3d, joints2d, vertices2d, jdepth, vdepth)


def interpolate_params(p0: BodyParams, p1: BodyParams, t: float) -> BodyParams:
    """Slerp pose, lerp shape/expression/translation. Endpoints are exact."""
    if p0.pose.shape != p1.pose.shape or p0.shape.shape != p1.shape.shape \
            or p0.expression.shape != p1.expression.shape:
        raise ValueError("cannot interpolate params of different dimensions")
    if t == 0.0:
        return p0.copy()
    if t == 1.0:
        return p1.copy()
    pose = np.stack([quat_slerp(p0.pose[j], p1.pose[j], t)
                     for j in range(p0.n_joints)])
    lerp = lambda a, b: (1.0 - t) * a + t * b
    return BodyParams(
        pose=pose,
        shape=lerp(p0.shape, p1.shape),
        expression=lerp(p0.expression, p1.expression),
        root_translation=lerp(p0.root_translation, p1.root_translation),
    )


# ---------------------------------------------------------------------------
# default template / camera
# ---------------------------------------------------------------------------

_JOINT_NAMES = (
    "pelvis", "spine", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)

_PARENT = np.array([-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14])

_REST_JOINTS = np.array([
    [0.00, 0.00, 0.0],   # pelvis
    [0.00, 0.25, 0.0],   # spine
    [0.00, 0.50, 0.0],   # neck
    [0.00, 0.62, 0.0],   # head
    [0.18, 0.45, 0.0],   # l_shoulder
    [0.42, 0.45, 0.0],   # l_elbow
    [0.66, 0.45, 0.0],   # l_wrist
    [-0.18, 0.45, 0.0],  # r_shoulder
    [-0.42, 0.45, 0.0],  # r_elbow
    [-0.66, 0.45, 0.0],  # r_wrist
    [0.10, -0.06, 0.0],  # l_hip
    [0.10, -0.48, 0.0],  # l_knee
    [0.10, -0.88, 0.0],  # l_ankle
    [-0.10, -0.06, 0.0],  # r_hip
    [-0.10, -0.48, 0.0],  # r_knee
    [-0.10, -0.88, 0.0],  # r_ankle
])

# (bone, vertex count, tube radius); head ball handled separately.
_BONE_SAMPLING = [
    ((0, 1), 75, 0.13), ((1, 2), 75, 0.12), ((2, 3), 15, 0.045),
    ((1, 4), 20, 0.055), ((4, 5), 40, 0.045), ((5, 6), 40, 0.040),
    ((1, 7), 20, 0.055), ((7, 8), 40, 0.045), ((8, 9), 40, 0.040),
    ((0, 10), 15, 0.080), ((10, 11), 35, 0.065), ((11, 12), 35, 0.055),
    ((0, 13), 15, 0.080), ((13, 14), 35, 0.065), ((14, 15), 35, 0.055),
]
_HEAD_VERTS = 65
_GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def _tube_frame(axis):
    axis = axis / np.linalg.norm(axis)
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def default_template() -> BodyTemplate:
    """Deterministic J=16 / V=600 humanoid template.

    Vertices are sampled as golden-angle tubes along each bone plus a sphere
    for the head. Skinning blends the bone's parent joint into the child
    near the distal end so joints bend smoothly.
    """
    verts, weights_rows = [], []
    J = len(_JOINT_NAMES)
    for (p, c), n, radius in _BONE_SAMPLING:
        a, b = _REST_JOINTS[p], _REST_JOINTS[c]
        e1, e2 = _tube_frame(b - a)
        for k in range(n):
            s = (k + 0.5) / n
            phi = k * _GOLDEN
            pos = a + s * (b - a) + radius * (np.cos(phi) * e1 + np.sin(phi) * e2)
            verts.append(pos)
            w = np.zeros(J)
            wc = 0.5 * np.clip((s - 0.6) / 0.4, 0.0, 1.0)
            w[c] = wc
            w[p] = 1.0 - wc
            weights_rows.append(w)
    head_center = _REST_JOINTS[3] + np.array([0.0, 0.07, 0.0])
    for k in range(_HEAD_VERTS):
        y = 1.0 - 2.0 * (k + 0.5) / _HEAD_VERTS
        r = np.sqrt(max(0.0, 1.0 - y * y))
        phi = k * _GOLDEN
        pos = head_center + 0.09 * np.array([r * np.cos(phi), y, r * np.sin(phi)])
        verts.append(pos)
        w = np.zeros(J)
        w[3] = 1.0
        weights_rows.append(w)

    rest_vertices = np.array(verts)
    weights = np.array(weights_rows)
    V = rest_vertices.shape[0]

    # Analytic blend-shape fields, small and smooth; deterministic.
    xyz = rest_vertices
    radial_xz = xyz * np.array([1.0, 0.0, 1.0])
    torso_mask = np.exp(-((xyz[:, 1] - 0.25) / 0.25) ** 2)[:, None]
    shoulder_mask = np.exp(-((xyz[:, 1] - 0.45) / 0.10) ** 2)[:, None]
    belly = np.exp(-(np.linalg.norm(xyz - np.array([0, 0.1, 0]), axis=1) / 0.2) ** 2)
    basis = np.stack(
        [
            0.05 * xyz,                                           # overall scale
            0.06 * xyz * np.array([1.0, 0.0, 0.0]),               # width
            0.05 * xyz * np.array([0.0, 1.0, 0.0]),               # height
            0.05 * radial_xz * torso_mask,                        # torso girth
            0.04 * radial_xz * (1.0 - torso_mask),                # limb girth
            0.04 * belly[:, None] * np.array([0.0, 0.0, 1.0]),    # belly bump
            0.05 * shoulder_mask * xyz * np.array([1.0, 0.0, 0.0]),  # shoulders
            0.06 * np.where(xyz[:, 1:2] < 0, xyz, 0.0) * np.array([0.0, 1.0, 0.0]),
        ],
        axis=2,
    )  # (V, 3, 8)

    head_mask = (weights[:, 3] > 0.99).astype(np.float64)[:, None]
    rel = xyz - head_center
    expr = np.stack(
        [
            0.02 * head_mask * np.array([0.0, 0.0, 1.0]) * np.ones((V, 3)),
            0.02 * head_mask * rel * np.array([1.0, 0.0, 0.0]),
            0.02 * head_mask * rel * np.array([0.0, 1.0, 0.0]),
            0.015 * head_mask * rel,
        ],
        axis=2,
    )  # (V, 3, 4)

    colors = np.array([colorsys.hsv_to_rgb(i / V, 1.0, 1.0) for i in range(V)])

    t = BodyTemplate(
        rest_joints=_REST_JOINTS.copy(),
        parent=_PARENT.copy(),
        rest_vertices=rest_vertices,
        skinning_weights=weights,
        shape_basis=basis,
        expression_basis=expr,
        vertex_colors=colors,
        joint_names=_JOINT_NAMES,
        head_cluster=(2, 3),
    )
    t.validate()
    return t


def default_camera(resolution=(64, 64), distance=3.0) -> Camera:
    """Camera on the world +z axis looking back at the origin, y-down image."""
    W, H = resolution
    f = 1.1 * min(W, H)
    # Rotation by pi about x: world +y maps to image up (decreasing v).
    R = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    return Camera(
        focal=(f, f),
        principal=((W - 1) / 2.0, (H - 1) / 2.0),
        resolution=(W, H),
        rotation=R,
        translation=np.array([0.0, 0.0, distance]),
    )
