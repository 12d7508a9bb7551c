"""Pure-numpy kernels. Same signatures and results as the numba versions."""

import numpy as np
from scipy import sparse


def _csr(data, indices, indptr, ncols):
    return sparse.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, ncols))


def csr_rows_matmul(data, indices, indptr, rows, mat):
    """Return ``X[rows] @ mat`` for the CSR matrix ``X`` (0-based column indices)."""
    X = _csr(data, indices, indptr, mat.shape[0])
    return np.asarray(X[rows] @ mat)


def csr_rows_tmatmul(data, indices, indptr, rows, weights, ncols):
    """Return ``X[rows].T @ weights`` with shape ``(ncols, weights.shape[1])``."""
    X = _csr(data, indices, indptr, ncols)
    return np.asarray(X[rows].T @ weights)


def kahan_mean(values):
    """Mean over axis 0 with compensated summation, sequential in row order."""
    values = np.asarray(values, dtype=np.float64)
    total = np.zeros(values.shape[1:])
    comp = np.zeros(values.shape[1:])
    for row in values:
        y = row - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total / values.shape[0]


def mdp_transition(states, actions, demands, lifetime, lead_time, backlog_floor):
    states = np.asarray(states, dtype=np.float64)
    z = states[:, :lifetime]
    q = states[:, lifetime:]
    short = np.maximum(demands - z[:, 0], 0.0)
    floor = backlog_floor - z[:, 2:].sum(axis=1)
    new_z0 = np.maximum(z[:, 1] - short, floor)
    return np.column_stack([new_z0, z[:, 2:], q, actions])


def mdp_stage_cost(states, actions, demands, lifetime, lead_time, discount, backlog_floor,
                   c_p, c_l, c_d, c_h, c_b):
    states = np.asarray(states, dtype=np.float64)
    z = states[:, :lifetime]
    z0 = z[:, 0]
    on_hand = z.sum(axis=1)
    older = on_hand - z0
    short = np.maximum(demands - z0, 0.0)
    cost = discount ** lead_time * c_p * actions
    cost = cost + c_h * np.maximum(older - short, 0.0)
    cost = cost + c_b * np.maximum(demands - on_hand, 0.0)
    cost = cost + c_d * np.maximum(z0 - demands, 0.0)
    cost = cost + c_l * np.maximum(backlog_floor + demands - on_hand, 0.0)
    return cost


def perishable_basis(states, knots):
    states = np.asarray(states, dtype=np.float64)
    z0, z1, q1 = states[:, 0], states[:, 1], states[:, 2]
    cols = [z0, z1, q1]
    for nu in knots:
        cols.append(np.maximum(z0 - nu, 0.0))
        cols.append(np.maximum(z0 + z1 - 2.0 * nu, 0.0))
        cols.append(np.maximum(z0 + z1 + q1 - 3.0 * nu, 0.0))
        cols.append(np.maximum(2.0 * nu - z0 - z1 - q1, 0.0))
        cols.append(np.maximum(nu - z1 - q1, 0.0))
    return np.column_stack(cols)
