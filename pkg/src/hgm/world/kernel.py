"""Compiled physics tick.

State lives in flat float arrays while inside the kernel; ``pack``/``unpack``
translate to and from :class:`WorldState`. The same compiled code serves
single steps (one call per low tick) and the multi-tick fast path, so both
produce identical trajectories.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..errors import SimulationDiverged

# scalar slots
TICK, PHASE, BOX_X, BOX_Y, BOX_YAW, BOX_ATT, OFF_X, OFF_Y, YAW_OFF, BOX_GONE, DOOR, BUTTON, CONV1 = range(13)
BALL_X, BALL_Y, BALL_VX, BALL_VY, BALL_TOUCH, FRICTION, BIAS_X, BIAS_Y, HAS_BOX, HAS_BALL, PEN_S, PEN_D = range(13, 25)
N_SCALARS = 25

# parameter slots
(P_MASS, P_LIN_D, P_ANG_D, P_JNT_D, P_LEVER, P_RADIUS, P_K, P_DT, P_GAIT, P_DOOR_MAX, P_DOOR_T, P_DOOR_FRAC,
 P_GRASP, P_HALF, P_BALL_R, P_BALL_D, P_REST, P_OBS_MU, P_CONV_VX, P_CONV_VY, P_L1, P_L2, P_SH_LX, P_SH_LY,
 P_SH_RX, P_SH_RY, P_MOTOR, P_CUTOFF, P_HAS_DOOR, P_HAS_BUTTON, P_BTN_X, P_BTN_Y, P_BTN_R, P_N_CONV,
 P_GRAVITY) = range(35)
N_PARAMS = 35

_JIT = dict(cache=True, nogil=True)


@numba.njit(**_JIT)
def _disc_rect(cx, cy, r, xmin, xmax, ymin, ymax):
    if cx < xmin - r or cx > xmax + r or cy < ymin - r or cy > ymax + r:
        return -1.0, 0.0, 0.0
    px = min(max(cx, xmin), xmax)
    py = min(max(cy, ymin), ymax)
    dx = cx - px
    dy = cy - py
    d2 = dx * dx + dy * dy
    if d2 >= r * r:
        return -1.0, 0.0, 0.0
    if d2 > 1e-18:
        d = math.sqrt(d2)
        return r - d, dx / d, dy / d
    # centre inside: leave through the nearest edge
    g, nx, ny = cx - xmin, -1.0, 0.0
    if xmax - cx < g:
        g, nx, ny = xmax - cx, 1.0, 0.0
    if cy - ymin < g:
        g, nx, ny = cy - ymin, 0.0, -1.0
    if ymax - cy < g:
        g, nx, ny = ymax - cy, 0.0, 1.0
    return r + g, nx, ny


@numba.njit(**_JIT)
def _penalty(pen, nx, ny, vx, vy, k, m):
    vn = vx * nx + vy * ny
    f = k * pen - 2.0 * math.sqrt(k * m) * vn
    if f <= 0.0:
        return 0.0, 0.0
    return f * nx, f * ny


@numba.njit(**_JIT)
def _hands(q, p):
    """World positions of both hands."""
    yaw = q[2] + q[3]
    c = math.cos(yaw)
    s = math.sin(yaw)
    out = np.empty(4)
    for arm in range(2):
        ox = p[P_SH_LX + 2 * arm]
        oy = p[P_SH_LY + 2 * arm]
        q1 = q[4 + 2 * arm]
        q2 = q[5 + 2 * arm]
        lx = p[P_L1] * math.cos(q1) + p[P_L2] * math.cos(q1 + q2) + ox
        ly = p[P_L1] * math.sin(q1) + p[P_L2] * math.sin(q1 + q2) + oy
        out[2 * arm] = q[0] + c * lx - s * ly
        out[2 * arm + 1] = q[1] + s * lx + c * ly
    return out


@numba.njit(**_JIT)
def _door_blocking(sc, p):
    return p[P_HAS_DOOR] > 0.5 and sc[DOOR] < p[P_DOOR_FRAC] * p[P_DOOR_MAX]


@numba.njit(**_JIT)
def tick(q, qd, tau_in, ext, mask, inertia, lower, upper, sc, p, statics, door, conveyors,
         obs_pos, obs_vel, obs_mass, obs_rad, bounds):
    """One semi-implicit Euler step under realised torques ``tau_in``."""
    dt = p[P_DT]
    n = q.shape[0]
    tau = np.empty(n)
    for j in range(n):
        tau[j] = tau_in[j] * mask[j]
    m = p[P_MASS]
    traction = sc[FRICTION] * m * p[P_GRAVITY]
    fx = tau[0]
    fy = tau[1]
    norm = math.sqrt(fx * fx + fy * fy)
    if norm > traction:
        fx = fx * traction / norm
        fy = fy * traction / norm
    ty_lim = traction * p[P_LEVER]
    tyaw = min(max(tau[2], -ty_lim), ty_lim)

    x = q[0]
    y = q[1]
    vx = qd[0]
    vy = qd[1]
    k = p[P_K]
    r_body = p[P_RADIUS]

    cfx = 0.0
    cfy = 0.0
    deepest = 0.0
    for i in range(statics.shape[0]):
        pen, nx, ny = _disc_rect(x, y, r_body, statics[i, 0], statics[i, 1], statics[i, 2], statics[i, 3])
        if pen >= 0.0:
            deepest = max(deepest, pen)
            gx, gy = _penalty(pen, nx, ny, vx, vy, k, m)
            cfx += gx
            cfy += gy
    blocking = _door_blocking(sc, p)
    door_pen = 0.0
    if blocking:
        pen, nx, ny = _disc_rect(x, y, r_body, door[0], door[1], door[2], door[3])
        if pen >= 0.0:
            door_pen = pen
            gx, gy = _penalty(pen, nx, ny, vx, vy, k, m)
            cfx += gx
            cfy += gy
    sc[PEN_S] = deepest
    sc[PEN_D] = door_pen

    n_obs = obs_mass.shape[0]
    if n_obs > 0:
        obs_force = np.zeros((n_obs, 2))
        for i in range(n_obs):
            ox = obs_pos[i, 0]
            oy = obs_pos[i, 1]
            ovx = obs_vel[i, 0]
            ovy = obs_vel[i, 1]
            om = obs_mass[i]
            orad = obs_rad[i]
            dx = x - ox
            dy = y - oy
            dist = math.sqrt(dx * dx + dy * dy)
            if dist < r_body + orad and dist > 1e-12:
                nx = dx / dist
                ny = dy / dist
                meff = m * om / (m + om)
                gx, gy = _penalty(r_body + orad - dist, nx, ny, vx - ovx, vy - ovy, k, meff)
                cfx += gx
                cfy += gy
                obs_force[i, 0] -= gx
                obs_force[i, 1] -= gy
            for j in range(statics.shape[0]):
                pen, nx, ny = _disc_rect(ox, oy, orad, statics[j, 0], statics[j, 1], statics[j, 2], statics[j, 3])
                if pen >= 0.0:
                    gx, gy = _penalty(pen, nx, ny, ovx, ovy, k, om)
                    obs_force[i, 0] += gx
                    obs_force[i, 1] += gy
            if blocking:
                pen, nx, ny = _disc_rect(ox, oy, orad, door[0], door[1], door[2], door[3])
                if pen >= 0.0:
                    gx, gy = _penalty(pen, nx, ny, ovx, ovy, k, om)
                    obs_force[i, 0] += gx
                    obs_force[i, 1] += gy
            speed = math.sqrt(ovx * ovx + ovy * ovy)
            drag = p[P_OBS_MU] * sc[FRICTION] * om * p[P_GRAVITY] / math.sqrt(speed * speed + 0.05 * 0.05)
            obs_force[i, 0] -= drag * ovx
            obs_force[i, 1] -= drag * ovy
        for i in range(n_obs):
            obs_vel[i, 0] += dt * obs_force[i, 0] / obs_mass[i]
            obs_vel[i, 1] += dt * obs_force[i, 1] / obs_mass[i]
            obs_pos[i, 0] += dt * obs_vel[i, 0]
            obs_pos[i, 1] += dt * obs_vel[i, 1]

    gen = tau.copy()
    gen[0] = fx + ext[0] + sc[BIAS_X] + cfx - p[P_LIN_D] * vx
    gen[1] = fy + ext[1] + sc[BIAS_Y] + cfy - p[P_LIN_D] * vy
    gen[2] = tyaw + ext[2] - p[P_ANG_D] * qd[2]
    for j in range(3, n):
        gen[j] -= p[P_JNT_D] * qd[j]
    for j in range(n):
        qd[j] += dt * gen[j] / inertia[j]
        q[j] += dt * qd[j]
    for j in range(3, n):
        if q[j] < lower[j]:
            q[j] = lower[j]
            qd[j] = max(qd[j], 0.0)
        elif q[j] > upper[j]:
            q[j] = upper[j]
            qd[j] = min(qd[j], 0.0)

    if sc[HAS_BALL] > 0.5:
        _ball(q, qd, sc, p, bounds)
    _scene(q, sc, p, conveyors)
    sc[PHASE] = (sc[PHASE] + 2.0 * math.pi * p[P_GAIT] * dt) % (2.0 * math.pi)
    sc[TICK] += 1.0
    ok = True
    for j in range(n):
        if not (math.isfinite(q[j]) and math.isfinite(qd[j])):
            ok = False
    for i in range(n_obs):
        if not (math.isfinite(obs_pos[i, 0]) and math.isfinite(obs_pos[i, 1])):
            ok = False
    return ok


@numba.njit(**_JIT)
def _ball(q, qd, sc, p, bounds):
    dt = p[P_DT]
    dx = sc[BALL_X] - q[0]
    dy = sc[BALL_Y] - q[1]
    dist = math.sqrt(dx * dx + dy * dy)
    reach = p[P_RADIUS] + p[P_BALL_R]
    if dist < reach and dist > 1e-12:
        nx = dx / dist
        ny = dy / dist
        vn = (qd[0] - sc[BALL_VX]) * nx + (qd[1] - sc[BALL_VY]) * ny
        if vn > 0.0 and sc[BALL_TOUCH] < 0.5:
            sc[BALL_VX] += (1.0 + p[P_REST]) * vn * nx
            sc[BALL_VY] += (1.0 + p[P_REST]) * vn * ny
        sc[BALL_X] = q[0] + nx * reach
        sc[BALL_Y] = q[1] + ny * reach
        sc[BALL_TOUCH] = 1.0
    else:
        sc[BALL_TOUCH] = 0.0
    keep = 1.0 - p[P_BALL_D] * dt
    sc[BALL_VX] *= keep
    sc[BALL_VY] *= keep
    sc[BALL_X] += dt * sc[BALL_VX]
    sc[BALL_Y] += dt * sc[BALL_VY]
    br = p[P_BALL_R]
    for axis in range(2):
        pos = sc[BALL_X + axis]
        lo = bounds[2 * axis]
        hi = bounds[2 * axis + 1]
        if pos < lo + br and sc[BALL_VX + axis] < 0:
            sc[BALL_VX + axis] *= -p[P_REST]
        elif pos > hi - br and sc[BALL_VX + axis] > 0:
            sc[BALL_VX + axis] *= -p[P_REST]


@numba.njit(**_JIT)
def _in_rect(x, y, r):
    return r[0] <= x <= r[1] and r[2] <= y <= r[3]


@numba.njit(**_JIT)
def _scene(q, sc, p, conveyors):
    dt = p[P_DT]
    has_button = p[P_HAS_BUTTON] > 0.5
    if not has_button and sc[HAS_BOX] < 0.5:
        return
    h = _hands(q, p)
    if has_button and sc[BUTTON] < 0.5:
        r2 = p[P_BTN_R] * p[P_BTN_R]
        dl = (h[0] - p[P_BTN_X]) ** 2 + (h[1] - p[P_BTN_Y]) ** 2
        dr = (h[2] - p[P_BTN_X]) ** 2 + (h[3] - p[P_BTN_Y]) ** 2
        if dl <= r2 or dr <= r2:
            sc[BUTTON] = 1.0
            if p[P_N_CONV] > 0.5:
                sc[CONV1] = 1.0
    if sc[BUTTON] > 0.5 and p[P_HAS_DOOR] > 0.5 and sc[DOOR] < p[P_DOOR_MAX]:
        sc[DOOR] = min(p[P_DOOR_MAX], sc[DOOR] + p[P_DOOR_MAX] / p[P_DOOR_T] * dt)

    if sc[HAS_BOX] < 0.5 or sc[BOX_GONE] > 0.5:
        return
    yaw = q[2] + q[3]
    c = math.cos(yaw)
    s = math.sin(yaw)
    half = p[P_HALF]
    mx = 0.5 * (h[0] + h[2])
    my = 0.5 * (h[1] + h[3])
    if sc[BOX_ATT] > 0.5:
        sep = math.sqrt((h[0] - h[2]) ** 2 + (h[1] - h[3]) ** 2)
        if sep - 2.0 * half > p[P_GRASP]:
            sc[BOX_ATT] = 0.0
        else:
            sc[BOX_X] = mx + (c * sc[OFF_X] - s * sc[OFF_Y])
            sc[BOX_Y] = my + (s * sc[OFF_X] + c * sc[OFF_Y])
            sc[BOX_YAW] = yaw + sc[YAW_OFF]
            return
    cb = math.cos(sc[BOX_YAW])
    sb = math.sin(sc[BOX_YAW])
    flx = sc[BOX_X] - sb * half
    fly = sc[BOX_Y] + cb * half
    frx = sc[BOX_X] + sb * half
    fry = sc[BOX_Y] - cb * half
    gl = math.sqrt((h[0] - flx) ** 2 + (h[1] - fly) ** 2)
    gr = math.sqrt((h[2] - frx) ** 2 + (h[3] - fry) ** 2)
    if gl < p[P_GRASP] and gr < p[P_GRASP]:
        sc[BOX_ATT] = 1.0
        ddx = sc[BOX_X] - mx
        ddy = sc[BOX_Y] - my
        sc[OFF_X] = c * ddx + s * ddy
        sc[OFF_Y] = -s * ddx + c * ddy
        sc[YAW_OFF] = sc[BOX_YAW] - yaw
        return
    if sc[CONV1] > 0.5 and p[P_N_CONV] > 1.5:
        belt = conveyors[1]
        if _in_rect(sc[BOX_X], sc[BOX_Y], belt):
            sc[BOX_X] += dt * p[P_CONV_VX]
            sc[BOX_Y] += dt * p[P_CONV_VY]
            if not _in_rect(sc[BOX_X], sc[BOX_Y], belt):
                sc[BOX_GONE] = 1.0


@numba.njit(**_JIT)
def actuate(current, tau, tau_rate, cur_out, mask, torque_limit, current_limit, p):
    """Motor model: current -> torque slew, torque saturation, rate filter."""
    dt = p[P_DT]
    a = dt / (dt + 1.0 / (2.0 * math.pi * p[P_CUTOFF]))
    for j in range(tau.shape[0]):
        i = min(max(current[j], -current_limit[j]), current_limit[j]) * mask[j]
        t = min(max(tau[j] + p[P_MOTOR] * i * dt, -torque_limit[j]), torque_limit[j]) * mask[j]
        raw = (t - tau[j]) / dt
        tau_rate[j] = tau_rate[j] + a * (raw - tau_rate[j])
        cur_out[j] = i
        tau[j] = t


@numba.njit(**_JIT)
def control(target, q, qd, tau, tau_rate, kp1, kd1, kp2, kd2, torque_limit, current_limit):
    """Impedance law then current law, both clamped."""
    n = q.shape[0]
    out = np.empty(n)
    for j in range(n):
        td = kp1[j] * (target[j] - q[j]) - kd1[j] * qd[j]
        td = min(max(td, -torque_limit[j]), torque_limit[j])
        i = kp2[j] * (td - tau[j]) - kd2[j] * tau_rate[j]
        out[j] = min(max(i, -current_limit[j]), current_limit[j])
    return out


@numba.njit(**_JIT)
def torque_control(tau_d, tau, tau_rate, kp2, kd2, torque_limit, current_limit):
    """Current law alone, tracking a torque set-point."""
    n = tau.shape[0]
    out = np.empty(n)
    for j in range(n):
        td = min(max(tau_d[j], -torque_limit[j]), torque_limit[j])
        i = kp2[j] * (td - tau[j]) - kd2[j] * tau_rate[j]
        out[j] = min(max(i, -current_limit[j]), current_limit[j])
    return out


@numba.njit(**_JIT)
def advance(n_ticks, target, kp1, kd1, kp2, kd2, q, qd, tau, tau_rate, cur, mask, inertia, lower, upper,
            torque_limit, current_limit, sc, p, statics, door, conveyors, obs_pos, obs_vel, obs_mass, obs_rad,
            bounds, pushes, torque_mode=False):
    """``n_ticks`` low-level ticks under a held joint target (or held torque set-point when
    ``torque_mode``). Returns ticks done (less on divergence)."""
    ext = np.zeros(3)
    for t in range(n_ticks):
        if torque_mode:
            current = torque_control(target, tau, tau_rate, kp2, kd2, torque_limit, current_limit)
        else:
            current = control(target, q, qd, tau, tau_rate, kp1, kd1, kp2, kd2, torque_limit, current_limit)
        actuate(current, tau, tau_rate, cur, mask, torque_limit, current_limit, p)
        ext[0] = 0.0
        ext[1] = 0.0
        ext[2] = 0.0
        now = sc[TICK]
        for i in range(pushes.shape[0]):
            if pushes[i, 0] <= now < pushes[i, 0] + pushes[i, 1]:
                ext[0] += pushes[i, 2]
                ext[1] += pushes[i, 3]
        if not tick(q, qd, tau, ext, mask, inertia, lower, upper, sc, p, statics, door, conveyors,
                    obs_pos, obs_vel, obs_mass, obs_rad, bounds):
            return t + 1
    return n_ticks


# ---------------------------------------------------------------- packing


class Static:
    """Per-config constant arrays, built once per WorldConfig."""

    _cache = {}

    def __init__(self, cfg):
        from .config import GRAVITY

        rp = cfg.robot
        lay = cfg.layout
        p = np.zeros(N_PARAMS)
        p[P_MASS] = rp.base_mass
        p[P_LIN_D] = rp.lin_damping
        p[P_ANG_D] = rp.ang_damping
        p[P_JNT_D] = rp.joint_damping
        p[P_LEVER] = rp.foot_lever
        p[P_RADIUS] = rp.body_radius
        p[P_K] = cfg.contact_stiffness
        p[P_DT] = cfg.dt
        p[P_GAIT] = cfg.gait_frequency
        p[P_DOOR_MAX] = cfg.door_max
        p[P_DOOR_T] = cfg.door_open_time
        p[P_DOOR_FRAC] = cfg.door_open_fraction
        p[P_GRASP] = cfg.grasp_radius
        p[P_HALF] = cfg.box_half
        p[P_BALL_R] = cfg.ball_radius
        p[P_BALL_D] = cfg.ball_damping
        p[P_REST] = cfg.restitution
        p[P_OBS_MU] = cfg.obstacle_friction
        p[P_CONV_VX], p[P_CONV_VY] = lay.conveyor_velocity
        p[P_L1], p[P_L2] = rp.link_lengths
        (p[P_SH_LX], p[P_SH_LY]), (p[P_SH_RX], p[P_SH_RY]) = rp.shoulder_offsets
        p[P_MOTOR] = rp.motor_constant
        p[P_CUTOFF] = rp.torque_rate_cutoff_hz
        p[P_HAS_DOOR] = float(lay.door is not None)
        if lay.button is not None:
            p[P_HAS_BUTTON] = 1.0
            p[P_BTN_X], p[P_BTN_Y], p[P_BTN_R] = lay.button.x, lay.button.y, lay.button.radius
        p[P_N_CONV] = float(len(lay.conveyors))
        p[P_GRAVITY] = GRAVITY
        self.p = p
        rects = lay.statics()
        self.statics = np.array([[r.xmin, r.xmax, r.ymin, r.ymax] for r in rects]).reshape(-1, 4)
        d = lay.door
        self.door = np.zeros(4) if d is None else np.array([d.xmin, d.xmax, d.ymin, d.ymax])
        conv = [[r.xmin, r.xmax, r.ymin, r.ymax] for r in lay.conveyors]
        self.conveyors = np.array(conv).reshape(-1, 4) if conv else np.zeros((0, 4))
        b = lay.bounds
        self.bounds = np.array([b.xmin, b.xmax, b.ymin, b.ymax])
        self.inertia = cfg.inertia
        self.lower = np.asarray(rp.lower, dtype=np.float64)
        self.upper = np.asarray(rp.upper, dtype=np.float64)
        self.torque_limit = np.asarray(rp.torque_limit, dtype=np.float64)
        self.current_limit = np.asarray(rp.current_limit, dtype=np.float64)

    @classmethod
    def of(cls, cfg):
        key = id(cfg)
        hit = cls._cache.get(key)
        if hit is None or hit[0] is not cfg:
            hit = (cfg, cls(cfg))
            cls._cache[key] = hit
        return hit[1]


def pack(s):
    sc = np.zeros(N_SCALARS)
    sc[TICK] = s.tick
    sc[PHASE] = s.phase
    if s.box_pos is not None:
        sc[HAS_BOX] = 1.0
        sc[BOX_X], sc[BOX_Y] = s.box_pos
    sc[BOX_YAW] = s.box_yaw
    sc[BOX_ATT] = float(s.box_attached)
    sc[OFF_X], sc[OFF_Y] = s.box_offset
    sc[YAW_OFF] = s.box_yaw_offset
    sc[BOX_GONE] = float(s.box_gone)
    sc[DOOR] = s.door_angle
    sc[BUTTON] = float(s.button_pushed)
    sc[CONV1] = float(len(s.conveyor_active) > 1 and bool(s.conveyor_active[1]))
    if s.ball_pos is not None:
        sc[HAS_BALL] = 1.0
        sc[BALL_X], sc[BALL_Y] = s.ball_pos
        sc[BALL_VX], sc[BALL_VY] = s.ball_vel
    sc[BALL_TOUCH] = float(s.ball_touching)
    sc[FRICTION] = s.friction_coeff
    sc[BIAS_X], sc[BIAS_Y] = s.bias_force
    sc[PEN_S] = s.penetration.get("static", 0.0)
    sc[PEN_D] = s.penetration.get("door", 0.0)
    return sc


def unpack(s, sc):
    s.tick = int(sc[TICK])
    s.phase = float(sc[PHASE])
    if s.box_pos is not None:
        s.box_pos = np.array([sc[BOX_X], sc[BOX_Y]])
        s.box_yaw = float(sc[BOX_YAW])
        s.box_attached = bool(sc[BOX_ATT] > 0.5)
        s.box_offset = np.array([sc[OFF_X], sc[OFF_Y]])
        s.box_yaw_offset = float(sc[YAW_OFF])
        s.box_gone = bool(sc[BOX_GONE] > 0.5)
    s.door_angle = float(sc[DOOR])
    s.button_pushed = bool(sc[BUTTON] > 0.5)
    if s.conveyor_active and sc[CONV1] > 0.5:
        s.conveyor_active = [False] + [True] * (len(s.conveyor_active) - 1)
    if s.ball_pos is not None:
        s.ball_pos = np.array([sc[BALL_X], sc[BALL_Y]])
        s.ball_vel = np.array([sc[BALL_VX], sc[BALL_VY]])
        s.ball_touching = bool(sc[BALL_TOUCH] > 0.5)
    s.penetration = {"static": float(sc[PEN_S]), "door": float(sc[PEN_D])}


def push_table(s):
    rows = []
    for p in s.pushes:
        d = p.unit_direction()
        rows.append([p.onset, p.duration, p.magnitude * d[0], p.magnitude * d[1]])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def step(s, tau, ext):
    """One tick on a WorldState, in place."""
    st = Static.of(s.cfg)
    sc = pack(s)
    ok = tick(s.q, s.qd, tau, ext, s.actuator_mask, st.inertia, st.lower, st.upper, sc, st.p, st.statics, st.door,
              st.conveyors, s.obstacle_pos, s.obstacle_vel, s.obstacle_mass, s.obstacle_radius, st.bounds)
    unpack(s, sc)
    if not ok:
        raise SimulationDiverged(f"non-finite state at tick {s.tick}")


def run_held(s, target, gains, n_ticks, torque_mode=False):
    """``n_ticks`` of impedance control toward a held target, in place.

    With ``torque_mode`` the target is a torque set-point and only the current
    loop (``kp2``, ``kd2``) runs.
    """
    st = Static.of(s.cfg)
    sc = pack(s)
    done = advance(n_ticks, np.asarray(target, dtype=np.float64), gains.kp1, gains.kd1, gains.kp2, gains.kd2,
                   s.q, s.qd, s.tau, s.tau_rate, s.current, s.actuator_mask, st.inertia, st.lower, st.upper,
                   st.torque_limit, st.current_limit, sc, st.p, st.statics, st.door, st.conveyors, s.obstacle_pos,
                   s.obstacle_vel, s.obstacle_mass, s.obstacle_radius, st.bounds, push_table(s), torque_mode)
    unpack(s, sc)
    if done < n_ticks:
        raise SimulationDiverged(f"non-finite state at tick {s.tick}")
    return done
