"""Compiled inner loops for the mass-spring simulator and the modular controller.

Everything here is plain numba over float64 arrays. No fastmath and no
parallel loops, so results are bit-reproducible.
"""

import math

import numba as nb
import numpy as np

HIDDEN = 10
N_SLOTS = 9
WALL_EPS = 1e-9
SIGMOID_EPS = 1e-12


@nb.njit(cache=True)
def ground_height(x, heights, col_width, x_origin):
    i = int(math.floor((x - x_origin) / col_width))
    n = heights.shape[0]
    if i < 0:
        i = 0
    elif i >= n:
        i = n - 1
    return heights[i]


@nb.njit(cache=True)
def _column_of(x, n, col_width, x_origin):
    i = int(math.floor((x - x_origin) / col_width))
    return i


@nb.njit(cache=True)
def _height_at(i, heights):
    n = heights.shape[0]
    if i < 0:
        return heights[0]
    if i >= n:
        return heights[n - 1]
    return heights[i]


@nb.njit(cache=True)
def resolve_contact(pos, vel, heights, col_width, x_origin, mu, touched):
    """Project penetrating masses out of the staircase ground.

    A mass inside a ground column is moved along the shortest exit: up onto
    the column top, or sideways out of a wall if the neighbouring column is
    low enough. The inward normal velocity is removed and the removed amount
    bounds the Coulomb friction applied to the tangential velocity.
    """
    n_mass = pos.shape[0]
    n_col = heights.shape[0]
    for m in range(n_mass):
        x = pos[m, 0]
        y = pos[m, 1]
        i = _column_of(x, n_col, col_width, x_origin)
        top = _height_at(i, heights)
        if y >= top:
            continue
        depth_up = top - y
        left_edge = x_origin + i * col_width
        right_edge = left_edge + col_width
        depth_left = np.inf
        depth_right = np.inf
        if _height_at(i - 1, heights) <= y:
            depth_left = x - left_edge
        if _height_at(i + 1, heights) <= y:
            depth_right = right_edge - x
        if depth_up <= depth_left and depth_up <= depth_right:
            pos[m, 1] = top
            normal_axis = 1
            inward = -vel[m, 1]
        elif depth_left <= depth_right:
            pos[m, 0] = left_edge - WALL_EPS
            normal_axis = 0
            inward = vel[m, 0]
        else:
            pos[m, 0] = right_edge + WALL_EPS
            normal_axis = 0
            inward = -vel[m, 0]
        touched[m] = True
        if inward <= 0.0:
            continue
        vel[m, normal_axis] = 0.0
        t_axis = 1 - normal_axis
        vt = vel[m, t_axis]
        cap = mu * inward
        if abs(vt) <= cap:
            vel[m, t_axis] = 0.0
        elif vt > 0.0:
            vel[m, t_axis] = vt - cap
        else:
            vel[m, t_axis] = vt + cap


@nb.njit(cache=True)
def substeps(pos, vel, inv_mass, spring_a, spring_b, rest, stiff, damp,
             n_sub, dt, gravity, drag, heights, col_width, x_origin, mu, touched):
    """Advance ``n_sub`` semi-implicit Euler substeps in place."""
    n_mass = pos.shape[0]
    n_spring = spring_a.shape[0]
    force = np.zeros((n_mass, 2))
    keep = 1.0 - drag * dt
    for m in range(n_mass):
        touched[m] = False
    for _ in range(n_sub):
        for m in range(n_mass):
            force[m, 0] = 0.0
            force[m, 1] = 0.0
        for s in range(n_spring):
            a = spring_a[s]
            b = spring_b[s]
            dx = pos[b, 0] - pos[a, 0]
            dy = pos[b, 1] - pos[a, 1]
            length = math.sqrt(dx * dx + dy * dy)
            if length < 1e-12:
                continue
            nx = dx / length
            ny = dy / length
            vrel = (vel[b, 0] - vel[a, 0]) * nx + (vel[b, 1] - vel[a, 1]) * ny
            f = stiff[s] * (length - rest[s]) + damp[s] * vrel
            force[a, 0] += f * nx
            force[a, 1] += f * ny
            force[b, 0] -= f * nx
            force[b, 1] -= f * ny
        for m in range(n_mass):
            vel[m, 0] = (vel[m, 0] + dt * force[m, 0] * inv_mass[m]) * keep
            vel[m, 1] = (vel[m, 1] + dt * (force[m, 1] * inv_mass[m] - gravity)) * keep
            pos[m, 0] += dt * vel[m, 0]
            pos[m, 1] += dt * vel[m, 1]
        resolve_contact(pos, vel, heights, col_width, x_origin, mu, touched)


@nb.njit(cache=True)
def set_rest_lengths(rest, rest0, spring_act, actions):
    for s in range(rest.shape[0]):
        j = spring_act[s]
        if j >= 0:
            rest[s] = rest0[s] * actions[j]
        else:
            rest[s] = rest0[s]


@nb.njit(cache=True)
def voxel_observations(pos, vel, corners, rest_area, touched, out):
    """Fill ``out`` (n_vox x 4) with vx, vy, volume ratio, touch per voxel."""
    for v in range(corners.shape[0]):
        vx = 0.0
        vy = 0.0
        area = 0.0
        touch = 0.0
        for j in range(4):
            p = corners[v, j]
            q = corners[v, (j + 1) % 4]
            vx += vel[p, 0]
            vy += vel[p, 1]
            area += pos[p, 0] * pos[q, 1] - pos[q, 0] * pos[p, 1]
            if touched[p]:
                touch = 1.0
        out[v, 0] = vx / 4.0
        out[v, 1] = vy / 4.0
        out[v, 2] = 0.5 * area / rest_area[v]
        out[v, 3] = touch


@nb.njit(cache=True)
def assemble_observations(vox_obs, neighbors, k, goal_sign, with_goal, out):
    """Controller inputs for every actuated voxel (rows of ``out``)."""
    theta = 2.0 * math.pi / 25.0 * (k % 25)
    s = math.sin(theta)
    c = math.cos(theta)
    for a in range(neighbors.shape[0]):
        for slot in range(N_SLOTS):
            v = neighbors[a, slot]
            base = 3 * slot
            if v >= 0:
                out[a, base] = vox_obs[v, 0]
                out[a, base + 1] = vox_obs[v, 1]
                out[a, base + 2] = vox_obs[v, 2]
            else:
                out[a, base] = 0.0
                out[a, base + 1] = 0.0
                out[a, base + 2] = 0.0
        out[a, 27] = s
        out[a, 28] = c
        out[a, 29] = vox_obs[neighbors[a, 0], 3]
        if with_goal:
            out[a, 30] = goal_sign


@nb.njit(cache=True)
def controller_forward(params, obs, out):
    """Shared-weight MLP applied to each row of ``obs``; writes actions to ``out``."""
    n_in = obs.shape[1]
    w1_end = n_in * HIDDEN
    b1_end = w1_end + HIDDEN
    w2_end = b1_end + HIDDEN
    for a in range(obs.shape[0]):
        z = params[w2_end]
        for h in range(HIDDEN):
            acc = params[w1_end + h]
            for i in range(n_in):
                acc += obs[a, i] * params[i * HIDDEN + h]
            if acc > 0.0:
                z += acc * params[b1_end + h]
        if z >= 0.0:
            y = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            y = e / (1.0 + e)
        y = min(max(y, SIGMOID_EPS), 1.0 - SIGMOID_EPS)
        out[a] = 0.6 + y


@nb.njit(cache=True)
def center_of_mass_x(pos, mass):
    num = 0.0
    den = 0.0
    for m in range(pos.shape[0]):
        num += mass[m] * pos[m, 0]
        den += mass[m]
    return num / den


@nb.njit(cache=True)
def rollout(pos, vel, mass, inv_mass, spring_a, spring_b, rest0, stiff, damp, spring_act,
            corners, rest_area, neighbors, touched, params, n_in, goal_sign, with_goal,
            n_steps, n_sub, dt, gravity, drag, heights, col_width, x_origin, mu, com_out):
    """Closed-loop episode with a fixed controller; fills ``com_out`` (n_steps + 1)."""
    n_act = neighbors.shape[0]
    rest = rest0.copy()
    vox_obs = np.zeros((corners.shape[0], 4))
    obs = np.zeros((n_act, n_in))
    actions = np.ones(n_act)
    com_out[0] = center_of_mass_x(pos, mass)
    for k in range(n_steps):
        if n_act > 0:
            voxel_observations(pos, vel, corners, rest_area, touched, vox_obs)
            assemble_observations(vox_obs, neighbors, k, goal_sign, with_goal, obs)
            controller_forward(params, obs, actions)
            set_rest_lengths(rest, rest0, spring_act, actions)
        substeps(pos, vel, inv_mass, spring_a, spring_b, rest, stiff, damp,
                 n_sub, dt, gravity, drag, heights, col_width, x_origin, mu, touched)
        com_out[k + 1] = center_of_mass_x(pos, mass)
