"""Perishable-inventory MDP and its sampled approximate linear program."""

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .. import _kernels
from ..soec import Box, Component, SoecProblem

COST_PROFILES = ((2.0, 10.0, 10.0), (5.0, 10.0, 8.0), (2.0, 5.0, 10.0))  # (c_h, c_d, c_b)


@dataclass(frozen=True)
class PerishableMdpSpec:
    """Perishable inventory with partial backlogging and order lead time.

    The state is ``(z_0, ..., z_{I-1}, q_1, ..., q_{J-1})``: on-hand stock by
    remaining lifetime followed by outstanding orders by periods to arrival.
    """

    lifetime: int = 2
    lead_time: int = 2
    max_order: float = 10.0
    backlog_floor: float = -10.0
    discount: float = 0.95
    c_p: float = 20.0
    c_l: float = 100.0
    c_d: float = 10.0
    c_h: float = 2.0
    c_b: float = 10.0
    demand_mean: float = 5.0
    demand_sd: float = 2.0
    demand_lo: float = 0.0
    demand_hi: float = 10.0
    initial_state: tuple = (5.0, 0.0, 0.0)

    def __post_init__(self):
        if self.lifetime < 2 or self.lead_time < 1:
            raise ValueError("need lifetime >= 2 and lead time >= 1")
        if not self.backlog_floor < 0:
            raise ValueError("backlog floor must be negative")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if len(self.initial_state) != self.state_dim:
            raise ValueError("initial state has the wrong length")

    @property
    def state_dim(self):
        return self.lifetime + self.lead_time - 1

    @classmethod
    def standard_instance(cls, profile=0):
        c_h, c_d, c_b = COST_PROFILES[profile]
        return cls(c_h=c_h, c_d=c_d, c_b=c_b)

    def truncnorm(self):
        a = (self.demand_lo - self.demand_mean) / self.demand_sd
        b = (self.demand_hi - self.demand_mean) / self.demand_sd
        return stats.truncnorm(a, b, loc=self.demand_mean, scale=self.demand_sd)

    def knots(self):
        """``E[G]`` and the 25th and 50th demand percentiles."""
        d = self.truncnorm()
        return np.array([d.mean(), d.ppf(0.25), d.ppf(0.5)])

    def state_is_valid(self, s, tol=1e-12):
        s = np.asarray(s, dtype=np.float64)
        rest = s[1:]
        floor = self.backlog_floor - s[2:self.lifetime].sum()
        return bool(s[0] >= floor - tol and np.all(rest >= -tol) and np.all(rest <= self.max_order + tol))

    def _cost_args(self):
        return (self.lifetime, self.lead_time, self.discount, self.backlog_floor,
                self.c_p, self.c_l, self.c_d, self.c_h, self.c_b)


def sample_truncated_normal(mean, sd, lo, hi, seed, count):
    """Inverse-CDF draws from ``N(mean, sd^2)`` restricted to ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError("degenerate truncation interval")
    if not sd > 0:
        raise ValueError("standard deviation must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p_lo = special.ndtr((lo - mean) / sd)
    p_hi = special.ndtr((hi - mean) / sd)
    u = rng.uniform(p_lo, p_hi, size=count)
    return np.clip(mean + sd * special.ndtri(u), lo, hi)


def _demands(spec, rng, count):
    return sample_truncated_normal(spec.demand_mean, spec.demand_sd, spec.demand_lo,
                                   spec.demand_hi, rng, count)


def _batch(states):
    states = np.asarray(states, dtype=np.float64)
    return states[None, :] if states.ndim == 1 else states


def mdp_transition(spec, s, a, demand):
    """Next state for each row of ``s`` (or a single state)."""
    single = np.ndim(s) == 1
    states = _batch(s)
    n = states.shape[0]
    out = _kernels.mdp_transition(states, np.broadcast_to(a, n), np.broadcast_to(demand, n),
                                  spec.lifetime, spec.lead_time, spec.backlog_floor)
    return out[0] if single else out


def mdp_stage_cost(spec, s, a, demands):
    """Purchase cost plus the demand-averaged holding/backlog/disposal/lost-sale cost."""
    demands = np.atleast_1d(np.asarray(demands, dtype=np.float64))
    if demands.size == 0:
        raise ValueError("empty demand batch")
    states = np.broadcast_to(np.asarray(s, dtype=np.float64), (demands.size, spec.state_dim))
    costs = _kernels.mdp_stage_cost(states, np.full(demands.size, float(a)), demands, *spec._cost_args())
    return float(costs.mean())


def basis_features(spec, s, knots=None):
    """``[z0, z1, q1]`` then five hinge features per knot; needs ``I = J = 2``."""
    if spec.lifetime != 2 or spec.lead_time != 2:
        raise ValueError("basis is defined for lifetime 2 and lead time 2")
    single = np.ndim(s) == 1
    k = spec.knots() if knots is None else knots
    out = _kernels.perishable_basis(_batch(s), k)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Sampled ALP


class _LinearObjective(Component):
    """``-(tau + theta @ phi(s0))``: the ALP maximization stored as a minimization."""

    def __init__(self, coef):
        self.coef = coef

    @property
    def has_exact(self):
        return True

    def draw(self, rng, n):
        return np.zeros(n)

    def evaluate(self, x, scenarios):
        return -float(self.coef @ x), -self.coef

    def exact(self, x):
        return self.evaluate(x, None)


class _AlpConstraint(Component):
    """One sampled Bellman inequality; only used for single-component access."""

    def __init__(self, owner, i):
        self.owner = owner
        self.i = i

    def draw(self, rng, n):
        return _demands(self.owner.spec, rng, n)

    def evaluate(self, x, scenarios):
        phi_next, cost = self.owner._moments(scenarios[None, :], rows=[self.i])
        return self.owner._affine(x, phi_next, cost, rows=[self.i])


class AlpProblem(SoecProblem):
    """Sampled ALP with one demand stream for the objective and one shared by the constraints.

    Constraint ``i`` is affine in ``x = (tau, theta)``:
    ``(1-g) tau + theta @ (phi(s_i) - g E[phi(f(s_i, a_i, G))]) - E[c(s_i, a_i, G)]``.
    Each oracle call draws a fresh ``(m, batch)`` block of demands.
    """

    def __init__(self, spec, states, actions, *, eval_seed=20_240_101, saa_count=10_000, name="alp"):
        self.spec = spec
        self.states = np.ascontiguousarray(states, dtype=np.float64)
        self.actions = np.ascontiguousarray(actions, dtype=np.float64)
        m = self.states.shape[0]
        if m < 1:
            raise ValueError("ALP needs at least one sampled state-action pair")
        self.knots = spec.knots()
        self.phi = basis_features(spec, self.states, self.knots)
        b = self.phi.shape[1]
        phi0 = basis_features(spec, np.asarray(spec.initial_state), self.knots)
        self.obj_coef = np.concatenate(([1.0], phi0))
        comps = [_LinearObjective(self.obj_coef)] + [_AlpConstraint(self, i) for i in range(m)]
        domain = Box(np.concatenate(([0.0], np.full(b, -5.0))), np.concatenate(([3000.0], np.full(b, 5.0))))
        super().__init__(comps, np.zeros(m), domain, name=name, objective_sign=-1,
                         eval_seed=eval_seed, metadata={"num_basis": b})
        self.saa_count = saa_count
        self._saa_cache = {}
        _, cost = self._saa_moments(saa_count, eval_seed)
        tau0 = float(cost.min()) / (1.0 - spec.discount)
        self.initial_point = np.concatenate(([tau0], np.zeros(b)))

    @property
    def num_streams(self):
        return 2

    def _moments(self, demands, rows=None):
        """Means over demand columns of ``phi(next state)`` and stage cost, per row."""
        spec = self.spec
        idx = np.arange(self.states.shape[0]) if rows is None else np.asarray(rows)
        k = demands.shape[1]
        s = np.repeat(self.states[idx], k, axis=0)
        a = np.repeat(self.actions[idx], k)
        g = demands.ravel()
        nxt = _kernels.mdp_transition(s, a, g, spec.lifetime, spec.lead_time, spec.backlog_floor)
        feats = _kernels.perishable_basis(nxt, self.knots).reshape(len(idx), k, -1)
        cost = _kernels.mdp_stage_cost(s, a, g, *spec._cost_args()).reshape(len(idx), k)
        return feats.mean(axis=1), cost.mean(axis=1)

    def _affine(self, x, phi_next, cost, rows=None):
        g = self.spec.discount
        phi = self.phi if rows is None else self.phi[rows]
        grads = np.empty((phi.shape[0], self.dimension))
        grads[:, 0] = 1.0 - g
        grads[:, 1:] = phi - g * phi_next
        values = grads @ x - cost
        if rows is not None and len(rows) == 1:
            return float(values[0]), grads[0]
        return values, grads

    def sample(self, x, rngs, batch_size):
        m = self.num_constraints
        demands = _demands(self.spec, rngs[1], m * batch_size).reshape(m, batch_size)
        phi_next, cost = self._moments(demands)
        cvals, cgrads = self._affine(x, phi_next, cost)
        values = np.concatenate(([-float(self.obj_coef @ x)], cvals))
        grads = np.vstack([-self.obj_coef, cgrads])
        return values, grads, (m + 1) * batch_size

    def _saa_moments(self, count, seed):
        key = (int(count), int(seed))
        if key not in self._saa_cache:
            rng = self.make_streams(seed)[1]
            m = self.num_constraints
            phi_sum = np.zeros((m, self.phi.shape[1]))
            cost_sum = np.zeros(m)
            done = 0
            while done < count:
                k = min(1000, count - done)
                d = _demands(self.spec, rng, m * k).reshape(m, k)
                pn, c = self._moments(d)
                phi_sum += pn * k
                cost_sum += c * k
                done += k
            self._saa_cache[key] = (phi_sum / count, cost_sum / count)
        return self._saa_cache[key]

    def saa_values(self, x, count, seed):
        """SAA values; the demand block is drawn once per ``(count, seed)`` and cached."""
        phi_next, cost = self._saa_moments(count, seed)
        cvals, _ = self._affine(np.asarray(x, dtype=np.float64), phi_next, cost)
        return np.concatenate(([-float(self.obj_coef @ x)], cvals))


def sample_state_actions(spec, m, seed):
    """Uniform pairs: ``z0`` on ``[l_s, a_max]``, other state entries and ``a`` on ``[0, a_max]``."""
    rng = np.random.default_rng(seed)
    states = rng.uniform(0.0, spec.max_order, size=(m, spec.state_dim))
    states[:, 0] = rng.uniform(spec.backlog_floor, spec.max_order, size=m)
    actions = rng.uniform(0.0, spec.max_order, size=m)
    return states, actions


def build_alp(spec: PerishableMdpSpec, m=500, seed=0, **kw) -> AlpProblem:
    if m < 1:
        raise ValueError("ALP needs at least one sampled state-action pair")
    states, actions = sample_state_actions(spec, m, seed)
    return AlpProblem(spec, states, actions, **kw)
