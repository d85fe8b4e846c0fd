"""Constant-ratio joint reconstruction, forward kinematics, trajectory error.

The arm bends in two planes. Joints in the same plane track the first joint
of that plane by a fixed ratio, so two measured angles (q1 pan, q2 tilt)
determine all six. The chain model is an idealized revolute chain with
alternating orthogonal axes: odd joints rotate about the local y axis (pan),
even joints about the local x axis (tilt), each followed by a link-length
translation along the local z axis. Base at origin, undeflected arm along +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class JointRatios:
    """Measured joint-angle ratios: q3 = pan_ratios[0]*q1, q5 = pan_ratios[1]*q1,
    q4 = tilt_ratios[0]*q2, q6 = tilt_ratios[1]*q2."""

    pan_ratios: tuple[float, float] = (0.6493, 0.2053)
    tilt_ratios: tuple[float, float] = (0.6442, 0.2291)

    def __post_init__(self):
        for r in (*self.pan_ratios, *self.tilt_ratios):
            if not 0.0 < r < 1.0:
                raise DataError(f"joint ratio {r} outside (0, 1)")


@dataclass(frozen=True)
class ChainGeometry:
    num_joints: int = 6
    link_length_m: float = 0.05

    def __post_init__(self):
        if self.link_length_m <= 0:
            raise DataError("link_length_m must be positive")
        if self.num_joints < 2 or self.num_joints % 2 != 0:
            raise DataError("num_joints must be even and >= 2")


def reconstruct_joints(q1: float, q2: float,
                       ratios: JointRatios = JointRatios()) -> np.ndarray:
    """Expand the two measured angles to the full 6-joint vector."""
    r3, r5 = ratios.pan_ratios
    r4, r6 = ratios.tilt_ratios
    return np.array([q1, q2, r3 * q1, r4 * q2, r5 * q1, r6 * q2])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def forward_kinematics(q: np.ndarray,
                       geom: ChainGeometry = ChainGeometry()) -> np.ndarray:
    """End-effector position for a full joint vector.

    Joint i (1-based) rotates about y when odd (pan) and about x when even
    (tilt); each joint is followed by a link translation along local z.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (geom.num_joints,):
        raise DataError(f"expected {geom.num_joints} joint angles, got shape {q.shape}")
    if np.any(np.abs(q) > np.pi / 2 + 1e-12):
        raise DataError("joint angle outside +/- pi/2")
    link = np.array([0.0, 0.0, geom.link_length_m])
    rot = np.eye(3)
    pos = np.zeros(3)
    for i, qi in enumerate(q):
        rot = rot @ (_rot_y(qi) if i % 2 == 0 else _rot_x(qi))
        pos = pos + rot @ link
    return pos


def trajectory_forward_kinematics(q_traj: np.ndarray,
                                  geom: ChainGeometry = ChainGeometry()) -> np.ndarray:
    """Apply forward_kinematics to each row of an (m, 6) trajectory."""
    q_traj = np.atleast_2d(np.asarray(q_traj, dtype=float))
    return np.array([forward_kinematics(row, geom) for row in q_traj])


def mean_euclidean_error(P: np.ndarray, Phat: np.ndarray) -> float:
    """Mean pointwise Euclidean distance between two position trajectories."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Phat = np.atleast_2d(np.asarray(Phat, dtype=float))
    if P.shape != Phat.shape or P.shape[0] < 1:
        raise DataError(f"trajectory shapes differ: {P.shape} vs {Phat.shape}")
    return float(np.mean(np.linalg.norm(P - Phat, axis=1)))
