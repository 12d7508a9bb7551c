"""numba-compiled kernels. Loop order is fixed, so reductions are reproducible."""

import numba
import numpy as np

jit = numba.njit(cache=True, nogil=True)


@jit
def csr_rows_matmul(data, indices, indptr, rows, mat):
    n = rows.shape[0]
    k = mat.shape[1]
    out = np.zeros((n, k))
    for r in range(n):
        row = rows[r]
        for p in range(indptr[row], indptr[row + 1]):
            v = data[p]
            col = indices[p]
            for j in range(k):
                out[r, j] += v * mat[col, j]
    return out


@jit
def csr_rows_tmatmul(data, indices, indptr, rows, weights, ncols):
    n = rows.shape[0]
    k = weights.shape[1]
    out = np.zeros((ncols, k))
    for r in range(n):
        row = rows[r]
        for p in range(indptr[row], indptr[row + 1]):
            v = data[p]
            col = indices[p]
            for j in range(k):
                out[col, j] += v * weights[r, j]
    return out


@jit
def _kahan_mean_2d(values):
    n, k = values.shape
    total = np.zeros(k)
    comp = np.zeros(k)
    for i in range(n):
        for j in range(k):
            y = values[i, j] - comp[j]
            t = total[j] + y
            comp[j] = (t - total[j]) - y
            total[j] = t
    return total / n


def kahan_mean(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    shape = values.shape[1:]
    flat = values.reshape(values.shape[0], -1)
    return _kahan_mean_2d(flat).reshape(shape)


@jit
def _transition(states, actions, demands, lifetime, backlog_floor):
    n, width = states.shape
    out = np.empty((n, width))
    for r in range(n):
        z0 = states[r, 0]
        short = demands[r] - z0
        if short < 0.0:
            short = 0.0
        floor = backlog_floor
        for i in range(2, lifetime):
            floor -= states[r, i]
        new_z0 = states[r, 1] - short
        if new_z0 < floor:
            new_z0 = floor
        out[r, 0] = new_z0
        for c in range(1, width - 1):
            out[r, c] = states[r, c + 1]
        out[r, width - 1] = actions[r]
    return out


def mdp_transition(states, actions, demands, lifetime, lead_time, backlog_floor):
    states = np.ascontiguousarray(states, dtype=np.float64)
    actions = np.ascontiguousarray(actions, dtype=np.float64)
    demands = np.ascontiguousarray(demands, dtype=np.float64)
    return _transition(states, actions, demands, lifetime, float(backlog_floor))


@jit
def _stage_cost(states, actions, demands, lifetime, purchase, backlog_floor,
                c_l, c_d, c_h, c_b):
    n = states.shape[0]
    out = np.empty(n)
    for r in range(n):
        z0 = states[r, 0]
        older = 0.0
        for i in range(1, lifetime):
            older += states[r, i]
        on_hand = z0 + older
        g = demands[r]
        short = g - z0
        if short < 0.0:
            short = 0.0
        cost = purchase * actions[r]
        v = older - short
        if v > 0.0:
            cost += c_h * v
        v = g - on_hand
        if v > 0.0:
            cost += c_b * v
        v = z0 - g
        if v > 0.0:
            cost += c_d * v
        v = backlog_floor + g - on_hand
        if v > 0.0:
            cost += c_l * v
        out[r] = cost
    return out


def mdp_stage_cost(states, actions, demands, lifetime, lead_time, discount, backlog_floor,
                   c_p, c_l, c_d, c_h, c_b):
    states = np.ascontiguousarray(states, dtype=np.float64)
    actions = np.ascontiguousarray(actions, dtype=np.float64)
    demands = np.ascontiguousarray(demands, dtype=np.float64)
    purchase = discount ** lead_time * c_p
    return _stage_cost(states, actions, demands, lifetime, float(purchase),
                       float(backlog_floor), float(c_l), float(c_d), float(c_h), float(c_b))


@jit
def _basis(states, knots):
    n = states.shape[0]
    out = np.empty((n, 3 + 5 * knots.shape[0]))
    for r in range(n):
        z0 = states[r, 0]
        z1 = states[r, 1]
        q1 = states[r, 2]
        out[r, 0] = z0
        out[r, 1] = z1
        out[r, 2] = q1
        c = 3
        for nu in knots:
            out[r, c] = max(z0 - nu, 0.0)
            out[r, c + 1] = max(z0 + z1 - 2.0 * nu, 0.0)
            out[r, c + 2] = max(z0 + z1 + q1 - 3.0 * nu, 0.0)
            out[r, c + 3] = max(2.0 * nu - z0 - z1 - q1, 0.0)
            out[r, c + 4] = max(nu - z1 - q1, 0.0)
            c += 5
    return out


def perishable_basis(states, knots):
    states = np.ascontiguousarray(states, dtype=np.float64)
    return _basis(states, np.asarray(knots, dtype=np.float64))
