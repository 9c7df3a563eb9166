"""Reduced articulated simulator for the buoyant biped.

One rigid torso (buoyancy applied at a point above the base) with two legs,
each a passive hip pitch joint and a cable-actuated knee. Contact is a
penalty spring-damper with Coulomb-capped friction at point feet. Integration
is semi-implicit Euler at physics_dt, substepped inside each control step.

The formulation is lumped: base translation carries the total mass, base
rotation uses a constant diagonal inertia, and each joint integrates its own
effective inertia with gravity/contact generalized torques. Internal joint
torques do not feed back into base translation, which makes the total linear
momentum bookkeeping exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

from .actuator import ActuatorParams, knee_torque
from .config import GRAVITY, HALF_PI, MorphologyConfig
from .trajectory import Trajectory, TrajectoryStep

TWO_PI = 2.0 * math.pi

# soft joint limits (engaged only outside normal operating range)
KNEE_LIMITS = (0.02, math.pi - 0.05)
HIP_LIMITS = (-1.8, 0.9)
LIMIT_STIFFNESS = 2.0    # N*m/rad
LIMIT_DAMPING = 0.05     # N*m*s/rad


class SimulationDiverged(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, substep: int, partial: Optional[Trajectory] = None):
        super().__init__(f"non-finite state at substep {substep}")
        self.substep = substep
        self.partial = partial


@dataclass(frozen=True)
class ExternalForce:
    """World-frame force applied at the balloon center, per-component <= 1 N."""
    force: tuple[float, float, float]

    def __post_init__(self):
        if any(abs(c) > 1.0 + 1e-12 for c in self.force):
            raise ValueError("external force components must lie in [-1, 1] N")


@dataclass(frozen=True)
class RobotState:
    base_position: tuple[float, float, float]
    base_orientation: tuple[float, float, float]   # roll, pitch, yaw (Z-Y-X)
    base_linear_velocity: tuple[float, float, float]
    base_angular_velocity: tuple[float, float, float]  # world frame
    joint_angles: tuple[float, float, float, float]    # hipL kneeL hipR kneeR
    joint_rates: tuple[float, float, float, float]
    motor_angles: tuple[float, float]
    sim_time: float = 0.0
    # world x-y stiction anchors per foot; None while the foot is airborne
    contact_anchors: tuple = (None, None)

    def is_finite(self) -> bool:
        vals = (*self.base_position, *self.base_orientation,
                *self.base_linear_velocity, *self.base_angular_velocity,
                *self.joint_angles, *self.joint_rates, *self.motor_angles,
                self.sim_time)
        return all(math.isfinite(v) for v in vals)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def rotation_matrix(roll: float, pitch: float, yaw: float):
    """Intrinsic Z-Y-X rotation as a row-major 9-tuple."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return (cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
            sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
            -sp, cp * sr, cp * cr)


def _leg_geometry(config, th, tk):
    """Base-frame sagittal leg points and their joint derivatives."""
    lf, lt = config.femur_length, config.tibia_length
    s1, c1 = math.sin(th), math.cos(th)
    s2, c2 = math.sin(th + tk), math.cos(th + tk)
    foot = (lf * s1 + lt * s2, -(lf * c1 + lt * c2))     # (x, z) from hip
    d_hip = (lf * c1 + lt * c2, lf * s1 + lt * s2)       # d foot / d th
    d_knee = (lt * c2, lt * s2)                          # d foot / d tk
    return s1, c1, s2, c2, foot, d_hip, d_knee


def foot_positions(state: RobotState, config: MorphologyConfig):
    """World positions of both feet as ((xL,yL,zL), (xR,yR,zR))."""
    R = rotation_matrix(*state.base_orientation)
    px, py, pz = state.base_position
    out = []
    for leg, sign in ((0, 1.0), (1, -1.0)):
        th = state.joint_angles[2 * leg]
        tk = state.joint_angles[2 * leg + 1]
        _, _, _, _, (fx, fz), _, _ = _leg_geometry(config, th, tk)
        bx, by, bz = fx, sign * config.hip_lateral_offset, fz
        out.append((px + R[0] * bx + R[1] * by + R[2] * bz,
                    py + R[3] * bx + R[4] * by + R[5] * bz,
                    pz + R[6] * bx + R[7] * by + R[8] * bz))
    return tuple(out)


def foot_velocities(state: RobotState, config: MorphologyConfig):
    """World velocities of both feet."""
    R = rotation_matrix(*state.base_orientation)
    vx, vy, vz = state.base_linear_velocity
    wx, wy, wz = state.base_angular_velocity
    out = []
    for leg, sign in ((0, 1.0), (1, -1.0)):
        th = state.joint_angles[2 * leg]
        tk = state.joint_angles[2 * leg + 1]
        thd = state.joint_rates[2 * leg]
        tkd = state.joint_rates[2 * leg + 1]
        _, _, _, _, (fx, fz), d_h, d_k = _leg_geometry(config, th, tk)
        bx, by, bz = fx, sign * config.hip_lateral_offset, fz
        rx = R[0] * bx + R[1] * by + R[2] * bz
        ry = R[3] * bx + R[4] * by + R[5] * bz
        rz = R[6] * bx + R[7] * by + R[8] * bz
        jx = d_h[0] * thd + d_k[0] * tkd
        jz = d_h[1] * thd + d_k[1] * tkd
        out.append((vx + wy * rz - wz * ry + R[0] * jx + R[2] * jz,
                    vy + wz * rx - wx * rz + R[3] * jx + R[5] * jz,
                    vz + wx * ry - wy * rx + R[6] * jx + R[8] * jz))
    return tuple(out)


def balloon_position(state: RobotState, config: MorphologyConfig):
    R = rotation_matrix(*state.base_orientation)
    h, a = config.balloon_offset, config.balloon_arm
    px, py, pz = state.base_position
    return (px + R[0] * a + R[2] * h, py + R[3] * a + R[5] * h,
            pz + R[6] * a + R[8] * h)


def balloon_velocity(state: RobotState, config: MorphologyConfig):
    R = rotation_matrix(*state.base_orientation)
    h, a = config.balloon_offset, config.balloon_arm
    rx, ry, rz = R[0] * a + R[2] * h, R[3] * a + R[5] * h, R[6] * a + R[8] * h
    vx, vy, vz = state.base_linear_velocity
    wx, wy, wz = state.base_angular_velocity
    return (vx + wy * rz - wz * ry, vy + wz * rx - wx * rz,
            vz + wx * ry - wy * rx)


def com_position(state: RobotState, config: MorphologyConfig):
    """World center of mass over torso, leg links, and foot servos."""
    R = rotation_matrix(*state.base_orientation)
    px, py, pz = state.base_position
    m_total = config.total_mass
    sx = config.torso_mass * 0.0
    acc = [config.torso_mass * px, config.torso_mass * py,
           config.torso_mass * pz]
    lf, lt = config.femur_length, config.tibia_length
    for leg, sign in ((0, 1.0), (1, -1.0)):
        th = state.joint_angles[2 * leg]
        tk = state.joint_angles[2 * leg + 1]
        s1, c1, s2, c2, _, _, _ = _leg_geometry(config, th, tk)
        ys = sign * config.hip_lateral_offset
        pts = (
            (config.femur_mass, 0.5 * lf * s1, ys, -0.5 * lf * c1),
            (config.tibia_mass, lf * s1 + 0.5 * lt * s2, ys,
             -(lf * c1 + 0.5 * lt * c2)),
            (config.foot_mass, lf * s1 + lt * s2, ys, -(lf * c1 + lt * c2)),
        )
        for m, bx, by, bz in pts:
            acc[0] += m * (px + R[0] * bx + R[1] * by + R[2] * bz)
            acc[1] += m * (py + R[3] * bx + R[4] * by + R[5] * bz)
            acc[2] += m * (pz + R[6] * bx + R[7] * by + R[8] * bz)
    return (acc[0] / m_total, acc[1] / m_total, acc[2] / m_total)


def _limit_torque(q, qd, lo, hi):
    if q < lo:
        return LIMIT_STIFFNESS * (lo - q) - LIMIT_DAMPING * qd
    if q > hi:
        return LIMIT_STIFFNESS * (hi - q) - LIMIT_DAMPING * qd
    return 0.0


def step(state: RobotState, action, external_force, params: ActuatorParams,
         config: MorphologyConfig, *,
         balloon_force_fn: Optional[Callable] = None) -> RobotState:
    """Advance one control step (substepping at physics_dt). Deterministic.

    `external_force` is an ExternalForce (or None) held constant over the
    control step. `balloon_force_fn(balloon_velocity) -> (fx, fy, fz)` is an
    injection hook for velocity-dependent forces, evaluated every substep.
    """
    a0, a1 = action
    if not (0.0 <= a0 <= 1.0 and 0.0 <= a1 <= 1.0):
        raise ValueError(f"action {action} outside [0, 1]^2")
    tgt0, tgt1 = HALF_PI * a0, HALF_PI * a1
    if external_force is not None and not isinstance(external_force,
                                                     ExternalForce):
        external_force = ExternalForce(tuple(external_force))
    ex, ey, ez = external_force.force if external_force is not None \
        else (0.0, 0.0, 0.0)

    dt = config.physics_dt
    n = config.substeps
    m_total = config.total_mass
    inv_m = 1.0 / m_total
    ixx, iyy, izz = config.base_inertia
    i_hip, i_knee = config.hip_inertia, config.knee_inertia
    lf, lt = config.femur_length, config.tibia_length
    hlf, hlt = 0.5 * lf, 0.5 * lt
    m_f, m_t, m_ft = config.femur_mass, config.tibia_mass, config.foot_mass
    w = config.hip_lateral_offset
    buoy = config.buoyancy_force
    g = GRAVITY
    kc, cc = config.foot_contact_stiffness, config.foot_contact_damping
    mu = config.friction_coefficient
    k_hip, c_hip = config.hip_spring_stiffness, config.hip_damping
    hip0 = config.default_hip_angle
    c_ang = config.base_angular_damping
    c_yaw = config.base_yaw_damping
    slew = params.servo_slew * dt
    h_b = config.balloon_offset
    a_b = config.balloon_arm

    px, py, pz = state.base_position
    roll, pitch, yaw = state.base_orientation
    vx, vy, vz = state.base_linear_velocity
    wxw, wyw, wzw = state.base_angular_velocity
    hL, kL, hR, kR = state.joint_angles
    hLd, kLd, hRd, kRd = state.joint_rates
    mL, mR = state.motor_angles
    anchors = [state.contact_anchors[0], state.contact_anchors[1]]

    for i in range(n):
        # servo slew toward command targets
        dm = tgt0 - mL
        mL += dm if abs(dm) <= slew else math.copysign(slew, dm)
        dm = tgt1 - mR
        mR += dm if abs(dm) <= slew else math.copysign(slew, dm)

        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        r00 = cy * cp
        r01 = cy * sp * sr - sy * cr
        r02 = cy * sp * cr + sy * sr
        r10 = sy * cp
        r11 = sy * sp * sr + cy * cr
        r12 = sy * sp * cr - cy * sr
        r20 = -sp
        r21 = cp * sr
        r22 = cp * cr

        # balloon lever arm and constant forces
        bx = r00 * a_b + r02 * h_b
        by = r10 * a_b + r12 * h_b
        bz = r20 * a_b + r22 * h_b
        fbx, fby, fbz = ex, ey, ez
        if balloon_force_fn is not None:
            bvx = vx + wyw * bz - wzw * by
            bvy = vy + wzw * bx - wxw * bz
            bvz = vz + wxw * by - wyw * bx
            hx, hy, hz = balloon_force_fn((bvx, bvy, bvz))
            fbx += hx
            fby += hy
            fbz += hz

        fx_tot = fbx
        fy_tot = fby
        fz_tot = fbz + buoy - m_total * g
        # torque from balloon-point forces (buoyancy + external/hook)
        tx = by * (fbz + buoy) - bz * fby
        ty = bz * fbx - bx * (fbz + buoy)
        tz = bx * fby - by * fbx

        q_torques = [0.0, 0.0, 0.0, 0.0]
        for leg in range(2):
            sign = 1.0 if leg == 0 else -1.0
            th = hL if leg == 0 else hR
            tk = kL if leg == 0 else kR
            thd = hLd if leg == 0 else hRd
            tkd = kLd if leg == 0 else kRd
            s1, c1 = math.sin(th), math.cos(th)
            s2, c2 = math.sin(th + tk), math.cos(th + tk)
            ys = sign * w

            # gravity on distributed leg masses: base torque + joint torques
            pts = ((m_f, hlf * s1, -hlf * c1),
                   (m_t, lf * s1 + hlt * s2, -(lf * c1 + hlt * c2)),
                   (m_ft, lf * s1 + lt * s2, -(lf * c1 + lt * c2)))
            for m, lx, lz in pts:
                rx_ = r00 * lx + r01 * ys + r02 * lz
                ry_ = r10 * lx + r11 * ys + r12 * lz
                tx += -m * g * ry_
                ty += m * g * rx_
            gz1 = r20 * c1 + r22 * s1   # world-z of d/dth of a unit sagittal arm
            gz2 = r20 * c2 + r22 * s2
            q_grav_h = -g * ((m_f * hlf + (m_t + m_ft) * lf) * gz1
                             + (m_t * hlt + m_ft * lt) * gz2)
            q_grav_k = -g * (m_t * hlt + m_ft * lt) * gz2

            # contact at the point foot
            fxl, fzl = lf * s1 + lt * s2, -(lf * c1 + lt * c2)
            rfx = r00 * fxl + r01 * ys + r02 * fzl
            rfy = r10 * fxl + r11 * ys + r12 * fzl
            rfz = r20 * fxl + r21 * ys + r22 * fzl
            foot_z = pz + rfz
            q_con_h = q_con_k = 0.0
            in_contact = False
            if foot_z < 0.0:
                dhx, dhz = lf * c1 + lt * c2, lf * s1 + lt * s2
                dkx, dkz = lt * c2, lt * s2
                jx = dhx * thd + dkx * tkd
                jz = dhz * thd + dkz * tkd
                vfx = vx + wyw * rfz - wzw * rfy + r00 * jx + r02 * jz
                vfy = vy + wzw * rfx - wxw * rfz + r10 * jx + r12 * jz
                vfz = vz + wxw * rfy - wyw * rfx + r20 * jx + r22 * jz
                normal = -kc * foot_z - cc * vfz
                if normal > 0.0:
                    in_contact = True
                    # stiction: elastic tangential force about a slip anchor,
                    # capped by Coulomb friction (anchor slides when capped)
                    pfx, pfy = px + rfx, py + rfy
                    anchor = anchors[leg]
                    if anchor is None:
                        anchor = (pfx, pfy)
                    ffx = -kc * (pfx - anchor[0]) - 1.0 * vfx
                    ffy = -kc * (pfy - anchor[1]) - 1.0 * vfy
                    fmag = math.hypot(ffx, ffy)
                    cap = mu * normal
                    if fmag > cap:
                        scale = cap / fmag
                        ffx *= scale
                        ffy *= scale
                        anchor = (pfx + ffx / kc, pfy + ffy / kc)
                    anchors[leg] = anchor
                    fx_tot += ffx
                    fy_tot += ffy
                    fz_tot += normal
                    tx += rfy * normal - rfz * ffy
                    ty += rfz * ffx - rfx * normal
                    tz += rfx * ffy - rfy * ffx
                    # map contact force to joint torques via J^T
                    whx = r00 * dhx + r02 * dhz
                    why = r10 * dhx + r12 * dhz
                    whz = r20 * dhx + r22 * dhz
                    wkx = r00 * dkx + r02 * dkz
                    wky = r10 * dkx + r12 * dkz
                    wkz = r20 * dkx + r22 * dkz
                    q_con_h = ffx * whx + ffy * why + normal * whz
                    q_con_k = ffx * wkx + ffy * wky + normal * wkz
            if not in_contact:
                anchors[leg] = None

            motor = mL if leg == 0 else mR
            tau_k = (knee_torque(motor, tk, tkd, params, leg)
                     + q_grav_k + q_con_k
                     + _limit_torque(tk, tkd, *KNEE_LIMITS))
            tau_h = (-k_hip * (th - hip0) - c_hip * thd
                     + q_grav_h + q_con_h
                     + _limit_torque(th, thd, *HIP_LIMITS))
            q_torques[2 * leg] = tau_h
            q_torques[2 * leg + 1] = tau_k

        # base linear
        vx += inv_m * fx_tot * dt
        vy += inv_m * fy_tot * dt
        vz += inv_m * fz_tot * dt
        px += vx * dt
        py += vy * dt
        pz += vz * dt

        # base angular in body frame
        wbx = r00 * wxw + r10 * wyw + r20 * wzw
        wby = r01 * wxw + r11 * wyw + r21 * wzw
        wbz = r02 * wxw + r12 * wyw + r22 * wzw
        tbx = r00 * tx + r10 * ty + r20 * tz - c_ang * wbx
        tby = r01 * tx + r11 * ty + r21 * tz - c_ang * wby
        tbz = r02 * tx + r12 * ty + r22 * tz - c_yaw * wbz
        # gyroscopic term with diagonal inertia
        tbx -= (izz - iyy) * wby * wbz
        tby -= (ixx - izz) * wbz * wbx
        tbz -= (iyy - ixx) * wbx * wby
        wbx += tbx / ixx * dt
        wby += tby / iyy * dt
        wbz += tbz / izz * dt
        # Euler-rate integration (Z-Y-X, body rates)
        tp = sp / cp
        roll += (wbx + sr * tp * wby + cr * tp * wbz) * dt
        pitch += (cr * wby - sr * wbz) * dt
        yaw += ((sr * wby + cr * wbz) / cp) * dt
        wxw = r00 * wbx + r01 * wby + r02 * wbz
        wyw = r10 * wbx + r11 * wby + r12 * wbz
        wzw = r20 * wbx + r21 * wby + r22 * wbz

        # joints
        hLd += q_torques[0] / i_hip * dt
        kLd += q_torques[1] / i_knee * dt
        hRd += q_torques[2] / i_hip * dt
        kRd += q_torques[3] / i_knee * dt
        hL += hLd * dt
        kL += kLd * dt
        hR += hRd * dt
        kR += kRd * dt

        if not (math.isfinite(px) and math.isfinite(pz) and math.isfinite(kL)
                and math.isfinite(kR) and math.isfinite(vx)
                and math.isfinite(roll)):
            raise SimulationDiverged(i)

    new_state = RobotState(
        base_position=(px, py, pz),
        base_orientation=(wrap_angle(roll), wrap_angle(pitch),
                          wrap_angle(yaw)),
        base_linear_velocity=(vx, vy, vz),
        base_angular_velocity=(wxw, wyw, wzw),
        joint_angles=(hL, kL, hR, kR),
        joint_rates=(hLd, kLd, hRd, kRd),
        motor_angles=(mL, mR),
        sim_time=state.sim_time + config.control_dt,
        contact_anchors=(anchors[0], anchors[1]),
    )
    if not new_state.is_finite():
        raise SimulationDiverged(n - 1)
    return new_state


def bench_step(state: RobotState, action, params: ActuatorParams,
               config: MorphologyConfig) -> RobotState:
    """Test-stand step: base clamped, leg gravity and contact disabled.

    Used for quasi-static response measurement; only motors, knees, and the
    hip centering springs are integrated.
    """
    a0, a1 = action
    tgt0, tgt1 = HALF_PI * a0, HALF_PI * a1
    dt = config.physics_dt
    slew = params.servo_slew * dt
    i_hip, i_knee = config.hip_inertia, config.knee_inertia
    k_hip, c_hip = config.hip_spring_stiffness, config.hip_damping
    hip0 = config.default_hip_angle
    # extra critical damping on the stand so each sample settles instead of
    # ringing; the measured steady state is damping-independent
    cb = (2.0 * math.sqrt(params.knee_stiffness[0] * i_knee),
          2.0 * math.sqrt(params.knee_stiffness[1] * i_knee))
    hL, kL, hR, kR = state.joint_angles
    hLd, kLd, hRd, kRd = state.joint_rates
    mL, mR = state.motor_angles
    for _ in range(config.substeps):
        dm = tgt0 - mL
        mL += dm if abs(dm) <= slew else math.copysign(slew, dm)
        dm = tgt1 - mR
        mR += dm if abs(dm) <= slew else math.copysign(slew, dm)
        kLd += (knee_torque(mL, kL, kLd, params, 0)
                - cb[0] * kLd) / i_knee * dt
        kRd += (knee_torque(mR, kR, kRd, params, 1)
                - cb[1] * kRd) / i_knee * dt
        hLd += (-k_hip * (hL - hip0) - c_hip * hLd) / i_hip * dt
        hRd += (-k_hip * (hR - hip0) - c_hip * hRd) / i_hip * dt
        kL += kLd * dt
        kR += kRd * dt
        hL += hLd * dt
        hR += hRd * dt
    return replace(state, joint_angles=(hL, kL, hR, kR),
                   joint_rates=(hLd, kLd, hRd, kRd), motor_angles=(mL, mR),
                   sim_time=state.sim_time + config.control_dt)


def nominal_state(params: ActuatorParams, config: MorphologyConfig,
                  height_margin: float = 0.0) -> RobotState:
    """Standing pose with joints at rest angles and feet at ground level."""
    th = config.default_hip_angle
    tkL, tkR = params.default_knee_angle
    _, _, _, _, (fxL, fzL), _, _ = _leg_geometry(config, th, tkL)
    _, _, _, _, (fxR, fzR), _, _ = _leg_geometry(config, th, tkR)
    base_z = -min(fzL, fzR) + height_margin
    return RobotState(
        base_position=(0.0, 0.0, base_z),
        base_orientation=(0.0, 0.0, 0.0),
        base_linear_velocity=(0.0, 0.0, 0.0),
        base_angular_velocity=(0.0, 0.0, 0.0),
        joint_angles=(th, tkL, th, tkR),
        joint_rates=(0.0, 0.0, 0.0, 0.0),
        motor_angles=(0.0, 0.0),
    )


@lru_cache(maxsize=32)
def settle_state(params: ActuatorParams, config: MorphologyConfig,
                 duration: float = 20.0) -> RobotState:
    """Quiescent standing state: settle under zero action, then recenter.

    The returned state has the base over the origin, zero yaw, zero
    velocities, and sim_time 0, and is (numerically) a static equilibrium.
    """
    state = nominal_state(params, config)
    steps = int(round(duration / config.control_dt))
    for _ in range(steps):
        state = step(state, (0.0, 0.0), None, params, config)
    roll, pitch, _ = state.base_orientation
    ox, oy, _ = state.base_position
    anchors = tuple(
        (a[0] - ox, a[1] - oy) if a is not None else None
        for a in state.contact_anchors)
    return RobotState(
        base_position=(0.0, 0.0, state.base_position[2]),
        base_orientation=(roll, pitch, 0.0),
        base_linear_velocity=(0.0, 0.0, 0.0),
        base_angular_velocity=(0.0, 0.0, 0.0),
        joint_angles=state.joint_angles,
        joint_rates=(0.0, 0.0, 0.0, 0.0),
        motor_angles=state.motor_angles,
        sim_time=0.0,
        contact_anchors=anchors,
    )


def mechanical_energy(state: RobotState, params: ActuatorParams,
                      config: MorphologyConfig) -> float:
    """Total mechanical energy consistent with the lumped model."""
    ke = 0.5 * config.total_mass * sum(v * v
                                       for v in state.base_linear_velocity)
    R = rotation_matrix(*state.base_orientation)
    wxw, wyw, wzw = state.base_angular_velocity
    wb = (R[0] * wxw + R[3] * wyw + R[6] * wzw,
          R[1] * wxw + R[4] * wyw + R[7] * wzw,
          R[2] * wxw + R[5] * wyw + R[8] * wzw)
    ixx, iyy, izz = config.base_inertia
    ke += 0.5 * (ixx * wb[0] ** 2 + iyy * wb[1] ** 2 + izz * wb[2] ** 2)
    for leg in range(2):
        ke += 0.5 * config.hip_inertia * state.joint_rates[2 * leg] ** 2
        ke += 0.5 * config.knee_inertia * state.joint_rates[2 * leg + 1] ** 2

    pe = 0.0
    cx, cy, cz = com_position(state, config)
    pe += config.total_mass * GRAVITY * cz
    pe -= config.buoyancy_force * balloon_position(state, config)[2]
    for leg in range(2):
        th = state.joint_angles[2 * leg]
        tk = state.joint_angles[2 * leg + 1]
        pe += 0.5 * config.hip_spring_stiffness * \
            (th - config.default_hip_angle) ** 2
        pe += 0.5 * params.knee_stiffness[leg] * \
            (tk - params.default_knee_angle[leg]) ** 2
    for leg, (fx, fy, fz) in enumerate(foot_positions(state, config)):
        if fz < 0.0:
            pe += 0.5 * config.foot_contact_stiffness * fz ** 2
            anchor = state.contact_anchors[leg]
            if anchor is not None:
                pe += 0.5 * config.foot_contact_stiffness * \
                    ((fx - anchor[0]) ** 2 + (fy - anchor[1]) ** 2)
    return ke + pe


def _resolve_action(action_source, state, index):
    if callable(action_source):
        return action_source(state, index)
    return tuple(action_source[index])


def _resolve_residual(residual_source, state, index):
    if residual_source is None:
        return None
    if callable(residual_source):
        return residual_source(state, index)
    return tuple(residual_source[index])


def rollout(initial: RobotState, action_source, residual_source,
            horizon: int, params: ActuatorParams, config: MorphologyConfig,
            *, source: str = "vanilla", seed: int = 0,
            step_fn: Optional[Callable] = None) -> Trajectory:
    """Roll the simulator for `horizon` control steps.

    `action_source` is a recorded sequence or a callable (state, i) -> action;
    `residual_source` is None, a recorded force sequence, or a callable.
    `step_fn(state, action, ext) -> state` overrides the default stepper (used
    by the hidden world and the improved simulator).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if step_fn is None:
        def step_fn(s, a, ext):
            return step(s, a, ext, params, config)
    steps = []
    state = initial
    for i in range(horizon):
        action = _resolve_action(action_source, state, i)
        force = _resolve_residual(residual_source, state, i)
        try:
            state = step_fn(state, action, force)
        except SimulationDiverged as err:
            err.partial = Trajectory.build(steps, config, source=source,
                                           seed=seed)
            raise
        steps.append(TrajectoryStep(
            time=state.sim_time, state=state,
            action=tuple(action),
            external_force=tuple(force) if force is not None else None))
    return Trajectory.build(steps, config, source=source, seed=seed)
