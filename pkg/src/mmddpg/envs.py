"""Analytic continuous-control environments with disturbance inputs.

Two systems are provided, both with coercive quadratic costs offset by a
positive constant so every step cost is strictly positive:

``point_mass``
    A planar unit mass pushed by actuator force plus an external force.
``two_link``
    A gravity-free planar two-joint arm; the disturbance is a force on the
    end effector, entering the joint equations through the Jacobian
    transpose.

States are batched: every array in :class:`EnvState` carries a leading
episode axis so evaluation can step many independent episodes at once. A
single training episode is simply a batch of one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, EnvFault, UsageError


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    disturbance_dim: int
    action_bound: float
    disturbance_bound: float
    horizon: int
    dt: float

    def validate(self):
        problems = []
        for name in ("state_dim", "action_dim", "disturbance_dim", "horizon"):
            if getattr(self, name) < 1:
                problems.append((f"env.{name}", "must be >= 1"))
        for name in ("action_bound", "disturbance_bound", "dt"):
            if not getattr(self, name) > 0:
                problems.append((f"env.{name}", "must be > 0"))
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants.

    ``masses``/``lengths`` hold one entry per body (point mass: one mass, no
    lengths). ``gear`` is the nominal actuator gain; ``gear_scale`` and
    ``damping_scale`` are the multiplicative perturbations used by the
    parameter-uncertainty protocol.
    """

    masses: tuple = (1.0,)
    lengths: tuple = ()
    damping: float = 0.5
    gear: float = 1.0
    gear_scale: float = 1.0
    damping_scale: float = 1.0
    cost_offset: float = 0.01
    action_penalty: float = 0.1

    def validate(self):
        problems = []
        if any(not m > 0 for m in self.masses):
            problems.append(("env.masses", "must be > 0"))
        if any(not length > 0 for length in self.lengths):
            problems.append(("env.lengths", "must be > 0"))
        if self.damping < 0:
            problems.append(("env.damping", "must be >= 0"))
        if not self.gear > 0:
            problems.append(("env.gear", "must be > 0"))
        if not self.gear_scale > 0:
            problems.append(("env.gear_scale", "must be > 0"))
        if self.damping_scale < 0:
            problems.append(("env.damping_scale", "must be >= 0"))
        if not self.cost_offset > 0:
            problems.append(("env.cost_offset", "must be > 0"))
        if self.action_penalty < 0:
            problems.append(("env.action_penalty", "must be >= 0"))
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class DisturbanceSpec:
    """How disturbances are produced for an episode.

    ``mode`` is ``"none"``, ``"gaussian"`` (episode-constant Gaussian with
    per-component ``mean``/``std``) or ``"adversary"`` (supplied by a policy).
    """

    mode: str = "none"
    mean: tuple = ()
    std: tuple = ()
    clamp: bool = True

    def __post_init__(self):
        if self.mode not in ("none", "gaussian", "adversary"):
            raise ConfigError([("disturbance.mode", f"unknown mode {self.mode!r}")])
        if self.mode == "gaussian":
            if len(self.mean) != len(self.std):
                raise ConfigError([("disturbance.std", "mean and std lengths differ")])
            if any(s < 0 for s in self.std):
                raise ConfigError([("disturbance.std", "entries must be >= 0")])


@dataclass
class EnvState:
    """Batched state: ``pos``/``vel`` are positions or joint angles and rates."""

    pos: np.ndarray
    vel: np.ndarray
    target: np.ndarray
    step_index: int = 0

    @property
    def batch(self):
        return self.pos.shape[0]

    def copy(self):
        return EnvState(self.pos.copy(), self.vel.copy(), self.target.copy(), self.step_index)

    @staticmethod
    def stack(states):
        idx = {s.step_index for s in states}
        if len(idx) != 1:
            raise UsageError("cannot stack states at different step indices")
        return EnvState(np.concatenate([s.pos for s in states]),
                        np.concatenate([s.vel for s in states]),
                        np.concatenate([s.target for s in states]),
                        idx.pop())


@dataclass(frozen=True)
class InitDistribution:
    """Initial positions uniform in a box around ``home``; target uniform in an annulus sector."""

    home: tuple = (0.0, 0.0)
    halfwidth: float = 0.1
    target_radius: tuple = (0.5, 1.0)
    target_angle: tuple = (0.0, 2.0 * np.pi)


class _Env:
    name = ""

    def __init__(self, spec, params, init, nominal=None):
        spec.validate()
        params.validate()
        self.spec = spec
        self.params = params
        self.nominal = nominal if nominal is not None else params
        self.init = init

    def with_params(self, **changes):
        return type(self)(spec=self.spec,
                          params=dataclasses.replace(self.params, **changes),
                          init=self.init, nominal=self.nominal)

    def with_spec(self, **changes):
        return type(self)(spec=dataclasses.replace(self.spec, **changes),
                          params=self.params, init=self.init, nominal=self.nominal)

    def reset(self, rng, n=1):
        """Draw ``n`` independent initial states from ``rng``."""
        init = self.init
        home = np.asarray(init.home, dtype=np.float64)
        pos = home + rng.uniform(-init.halfwidth, init.halfwidth, size=(n, 2))
        vel = np.zeros((n, 2))
        r = rng.uniform(init.target_radius[0], init.target_radius[1], size=n)
        ang = rng.uniform(init.target_angle[0], init.target_angle[1], size=n)
        target = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        return EnvState(pos, vel, target, 0)

    def step(self, state, action, disturbance, strict=True):
        """Advance one step. Returns ``(next_state, cost, terminal)``.

        ``action`` and ``disturbance`` are clamped to their bounds. With
        ``strict`` a non-finite result raises :class:`EnvFault`; otherwise
        the caller inspects the outputs itself.
        """
        n = state.batch
        a = np.ascontiguousarray(np.broadcast_to(np.asarray(action, dtype=np.float64),
                                                 (n, self.spec.action_dim)))
        w = np.ascontiguousarray(np.broadcast_to(np.asarray(disturbance, dtype=np.float64),
                                                 (n, self.spec.disturbance_dim)))
        new_pos, new_vel, cost = self._kernel(state, a, w)
        nxt = EnvState(new_pos, new_vel, state.target, state.step_index + 1)
        if strict:
            ok = finite_rows(nxt, cost)
            if not ok.all():
                raise EnvFault(f"{self.name}: non-finite state at step {state.step_index}", ~ok)
        return nxt, cost, nxt.step_index >= self.spec.horizon

    def observe(self, state):
        raise NotImplementedError

    def _kernel(self, state, a, w):
        raise NotImplementedError


def finite_rows(state, cost):
    return (np.isfinite(state.pos).all(axis=1) & np.isfinite(state.vel).all(axis=1)
            & np.isfinite(cost))


class PointMassEnv(_Env):
    """Planar point mass; observation ``[p - p*, v, p*]``."""

    name = "point_mass"

    def __init__(self, spec=None, params=None, init=None, nominal=None):
        spec = spec or EnvSpec(6, 2, 2, 1.0, 1.0, 100, 0.05)
        params = params or PhysicsParams()
        init = init or InitDistribution()
        if (spec.state_dim, spec.action_dim, spec.disturbance_dim) != (6, 2, 2):
            raise ConfigError([("env", "point_mass has state 6, action 2, disturbance 2")])
        if len(params.masses) != 1:
            raise ConfigError([("env.masses", "point_mass takes exactly one mass")])
        super().__init__(spec, params, init, nominal)

    def _kernel(self, state, a, w):
        p, s = self.params, self.spec
        return kernels.point_mass_step(
            state.pos, state.vel, state.target, a, w, p.masses[0], p.damping, p.gear,
            p.gear_scale, p.damping_scale, s.dt, s.action_bound, s.disturbance_bound,
            p.action_penalty, p.cost_offset)

    def observe(self, state):
        return np.concatenate([state.pos - state.target, state.vel, state.target], axis=1)

    def kinetic_energy(self, state):
        return 0.5 * self.params.masses[0] * np.sum(state.vel ** 2, axis=1)


class TwoLinkEnv(_Env):
    """Planar two-joint arm; observation ``[cos q, sin q, dq, tip - p*, p*]``."""

    name = "two_link"

    def __init__(self, spec=None, params=None, init=None, nominal=None):
        spec = spec or EnvSpec(10, 2, 2, 1.0, 0.2, 100, 0.01)
        params = params or PhysicsParams(masses=(1.0, 1.0), lengths=(0.1, 0.1),
                                         damping=0.02, gear=0.05, action_penalty=0.01)
        init = init or InitDistribution(home=(0.0, 0.0), halfwidth=0.1,
                                        target_radius=(0.05, 0.18))
        if (spec.state_dim, spec.action_dim, spec.disturbance_dim) != (10, 2, 2):
            raise ConfigError([("env", "two_link has state 10, action 2, disturbance 2")])
        if len(params.masses) != 2 or len(params.lengths) != 2:
            raise ConfigError([("env.masses", "two_link takes two masses and two lengths")])
        super().__init__(spec, params, init, nominal)

    def _kernel(self, state, a, w):
        p, s = self.params, self.spec
        (m1, m2), (l1, l2) = p.masses, p.lengths
        return kernels.two_link_step(
            state.pos, state.vel, state.target, a, w, m1, m2, l1, l2, p.damping, p.gear,
            p.gear_scale, p.damping_scale, s.dt, s.action_bound, s.disturbance_bound,
            p.action_penalty, p.cost_offset)

    def fk(self, q):
        q = np.ascontiguousarray(np.atleast_2d(q), dtype=np.float64)
        return kernels.two_link_fk(q, *self.params.lengths)

    def observe(self, state):
        q = state.pos
        return np.concatenate([np.cos(q), np.sin(q), state.vel,
                               self.fk(q) - state.target, state.target], axis=1)

    def mass_matrix(self, q):
        q = np.ascontiguousarray(np.atleast_2d(q), dtype=np.float64)
        (m1, m2), (l1, l2) = self.params.masses, self.params.lengths
        return kernels.two_link_mass_matrix(q, m1, m2, l1, l2)

    def kinetic_energy(self, state):
        m11, m12, m22 = self.mass_matrix(state.pos)
        d1, d2 = state.vel[:, 0], state.vel[:, 1]
        return 0.5 * (m11 * d1 * d1 + 2.0 * m12 * d1 * d2 + m22 * d2 * d2)


ENVIRONMENTS = {"point_mass": PointMassEnv, "two_link": TwoLinkEnv}


def make_env(name, **kwargs):
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError([("run.env", f"unknown environment {name!r}")]) from None
    return cls(**kwargs)


def apply_param_scaling(env, gear_scale, damping_scale):
    """Copy of ``env`` whose gear/damping multipliers are replaced.

    Only the two scale fields change; the nominal parameters travel along so
    a later scaling is always relative to nominal.
    """
    if not gear_scale > 0:
        raise ConfigError([("gear_scale", f"must be > 0, got {gear_scale}")])
    if not damping_scale >= 0:
        raise ConfigError([("damping_scale", f"must be >= 0, got {damping_scale}")])
    params = dataclasses.replace(env.nominal, gear_scale=float(gear_scale),
                                 damping_scale=float(damping_scale))
    return type(env)(spec=env.spec, params=params, init=env.init, nominal=env.nominal)


def sample_episode_disturbance(spec, rng, bound=None):
    """Draw the constant disturbance vector for one episode.

    ``w ~ N(mean, diag(std^2))``, clamped to ``[-bound, bound]`` when
    ``spec.clamp`` is set.
    """
    if spec.mode != "gaussian":
        raise UsageError(f"episode disturbance sampling needs gaussian mode, got {spec.mode!r}")
    mean = np.asarray(spec.mean, dtype=np.float64)
    std = np.asarray(spec.std, dtype=np.float64)
    w = mean + std * rng.standard_normal(mean.shape)
    if spec.clamp:
        if bound is None:
            raise UsageError("clamping requested without a disturbance bound")
        w = np.clip(w, -bound, bound)
    return w


def scaling_grid(damping_scales, gear_scales):
    """All ``(damping_scale, gear_scale)`` pairs, damping-major."""
    return [(float(d), float(g)) for d in damping_scales for g in gear_scales]
