"""Per-plant task bundles.

A bundle collects everything the training, evaluation, and assured-run loops
need to know about one plant behind a uniform surface: stepping, region
membership, rewards, initial states, the baseline controller, and network
sizing. Actions cross the surface as 1-d float arrays.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import controllers as ctl
from . import runtime as rt
from .plants import pancreas as ap
from .plants import pendulum as ip
from .plants import rover as rv


@dataclass
class PlantBundle:
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    state_scale: np.ndarray
    step: callable                      # (s, a) -> s'
    recoverable: callable               # s -> bool
    unsafe: callable                    # s -> bool
    reward: callable                    # (s, a, s', fsc) -> float
    r_unrecov: float
    goal: callable                      # s' -> bool
    init_state: callable                # rng -> s
    bc_controller: callable             # () -> controller with reset/step_plant
    filter_bc_action: callable          # s -> a, stateless
    rsc: callable                       # (s, policy) -> bool
    actor_hidden: tuple = (32, 32)
    critic_hidden: tuple = (64, 64)
    hidden_activation: str = "relu"
    default_noise_sigma: np.ndarray = None
    extras: dict = dc_field(default_factory=dict)

    def fsc(self, s, a):
        """Forward switching condition for a proposal in a state."""
        return rt.fsc(s, a, self.step, self.recoverable)

    def action_offset_scale(self):
        return ctl.actor_box_params(self.action_low, self.action_high)


class _IpBc:
    """Pendulum baseline: the certified feedback law, integrated in closed
    loop while it holds the plant."""

    def __init__(self, ip_params, bc_params):
        self.ip_params = ip_params
        self.bc_params = bc_params

    def reset(self):
        pass

    def step_plant(self, s, rng):
        a = ctl.ip_bc_action(s, self.bc_params)
        s2 = ip.ip_closed_loop_step(s, self.bc_params.K, self.ip_params)
        return s2, np.array([a])


def make_pendulum_task(ip_params: ip.IpParams = None,
                       bc_params: ctl.IpBcParams = None,
                       rsc_lookahead: int = 10,
                       init_margin: float = 0.8):
    ip_params = ip_params or ip.IpParams()
    bc_params = bc_params or ctl.IpBcParams(action_limit=ip_params.action_limit)
    P = bc_params.P
    lim = ip_params.action_limit

    def step(s, a):
        return ip.ip_step(s, float(np.asarray(a).reshape(-1)[0]), ip_params)

    def recoverable(s):
        return rt.ip_recoverable(s, P)

    def unsafe(s):
        return not ip.ip_in_safety_box(s, ip_params)

    def reward(s, a, s2, fsc_flag):
        return rt.ip_reward(s2, fsc_flag)

    def init_state(rng):
        # rejection-sample well inside the recoverable ellipsoid; the
        # ellipsoid's angular-velocity extent is about 2.08
        while True:
            s = np.array([
                rng.uniform(-ip_params.pos_limit, ip_params.pos_limit),
                rng.uniform(-ip_params.vel_limit, ip_params.vel_limit),
                rng.uniform(-ip_params.angle_limit, ip_params.angle_limit),
                rng.uniform(-2.1, 2.1),
            ])
            if float(s @ P @ s) <= init_margin:
                return s

    bundle = PlantBundle(
        name="pendulum",
        state_dim=4,
        action_dim=1,
        action_low=np.array([-lim]),
        action_high=np.array([lim]),
        state_scale=np.array([1.0, 1.0, ip_params.angle_limit, 2.1]),
        step=step,
        recoverable=recoverable,
        unsafe=unsafe,
        reward=reward,
        r_unrecov=0.0,
        goal=lambda s2: False,
        init_state=init_state,
        bc_controller=lambda: _IpBc(ip_params, bc_params),
        filter_bc_action=lambda s: np.array([ctl.ip_bc_action(s, bc_params)]),
        rsc=None,
        default_noise_sigma=np.array([0.5]),
        extras={"ip_params": ip_params, "bc_params": bc_params},
    )
    bundle.rsc = lambda s, policy: rt.rsc_horizon(s, policy, bundle.step,
                                                  bundle.fsc, rsc_lookahead)
    return bundle


class _RoverBc:
    def __init__(self, params, field, bc_params, recoverable):
        self.params = params
        self.field = field
        self.bc_params = bc_params
        self.recoverable = recoverable
        self.state = ctl.RoverBcState()

    def reset(self):
        self.state = ctl.RoverBcState()

    def step_plant(self, s, rng):
        a, self.state = ctl.rover_bc_action(
            s, self.state, self.params, self.field, self.bc_params,
            self.recoverable, rng)
        return rv.rover_step(s, a, self.params, self.field), np.asarray(a, dtype=float)


def make_rover_task(field: rv.ObstacleField = None, field_seed: int = 0,
                    params: rv.RoverParams = None,
                    bc_params: ctl.RoverBcParams = None):
    params = params or rv.RoverParams()
    field = field if field is not None else rv.generate_obstacle_field(field_seed, params)
    bc_params = bc_params or ctl.RoverBcParams()

    def step(s, a):
        return rv.rover_step(s, np.asarray(a, dtype=float), params, field)

    def recoverable(s):
        return rt.rover_recoverable(s, params)

    def unsafe(s):
        pos = s[:2]
        clearance = np.hypot(*(field.centers - pos).T) - field.radii
        return bool(clearance.size and clearance.min() < params.r)

    def reward(s, a, s2, fsc_flag):
        return rt.rover_reward(s, s2, fsc_flag, params)

    def goal(s2):
        return rv.distance_to_target(s2) <= params.reach_distance

    def init_state(rng):
        # uniform stopped pose, rejected until recoverable and not already
        # at the target
        while True:
            pos = rng.uniform(-params.arena_half, params.arena_half, size=2)
            heading = rng.uniform(0.0, 2.0 * np.pi)
            s = rv.make_state(pos, heading, 0.0, field, params)
            if goal(s) or not recoverable(s):
                continue
            clearance = np.hypot(*(field.centers - pos).T) - field.radii
            if clearance.min() < params.r:
                continue
            return s

    def filter_bc_action(s):
        rate = min(params.a_max, s[rv.V] / params.dt)
        return -rate * np.array([np.cos(s[rv.THETA]), np.sin(s[rv.THETA])])

    n = params.n_sensors
    return PlantBundle(
        name="rover",
        state_dim=4 + n,
        action_dim=2,
        action_low=np.array([-params.a_max, -params.a_max]),
        action_high=np.array([params.a_max, params.a_max]),
        state_scale=np.concatenate([
            [params.arena_half, params.arena_half, np.pi, params.v_max],
            np.full(n, params.l_max)]),
        step=step,
        recoverable=recoverable,
        unsafe=unsafe,
        reward=reward,
        r_unrecov=-20_000.0,
        goal=goal,
        init_state=init_state,
        bc_controller=lambda: _RoverBc(params, field, bc_params, recoverable),
        filter_bc_action=filter_bc_action,
        rsc=lambda s, policy: rt.rsc_margin(s, params),
        actor_hidden=(64, 64),
        critic_hidden=(64, 64),
        default_noise_sigma=np.array([0.16, 0.16]),
        extras={"params": params, "field": field, "bc_params": bc_params},
    )


class _ApBc:
    def __init__(self, ap_params):
        self.ap_params = ap_params

    def reset(self):
        pass

    def step_plant(self, s, rng):
        return ap.ap_step(s, 0.0, self.ap_params), np.array([0.0])


def make_pancreas_task(params: ap.ApParams = None, rsc_lookahead: int = 10,
                       init_g_range=(-3.0, 8.0)):
    params = params or ap.ApParams()

    def step(s, a):
        return ap.ap_step(s, float(np.asarray(a).reshape(-1)[0]), params)

    def recoverable(s):
        return rt.ap_recoverable(s, params)

    def unsafe(s):
        return rt.ap_unsafe(s, params)

    def reward(s, a, s2, fsc_flag):
        return rt.ap_reward(s2, fsc_flag)

    def init_state(rng):
        # glucose anywhere in the clinically interesting band, insulin
        # compartments at the pump-off equilibrium
        while True:
            s = np.array([rng.uniform(*init_g_range), 0.0, 0.0])
            if recoverable(s):
                return s

    bundle = PlantBundle(
        name="pancreas",
        state_dim=3,
        action_dim=1,
        action_low=np.array([0.0]),
        action_high=np.array([params.u_max]),
        state_scale=np.array([10.0, 60.0, 2000.0]),
        step=step,
        recoverable=recoverable,
        unsafe=unsafe,
        reward=reward,
        r_unrecov=rt.AP_R_UNRECOV,
        goal=lambda s2: False,
        init_state=init_state,
        bc_controller=lambda: _ApBc(params),
        filter_bc_action=lambda s: np.array([ctl.ap_bc_action(s)]),
        rsc=None,
        default_noise_sigma=np.array([10.0]),
        extras={"params": params},
    )
    bundle.rsc = lambda s, policy: rt.rsc_horizon(s, policy, bundle.step,
                                                  bundle.fsc, rsc_lookahead)
    return bundle


def make_task(name, **kw):
    makers = {"pendulum": make_pendulum_task, "rover": make_rover_task,
              "pancreas": make_pancreas_task}
    if name not in makers:
        raise ValueError(f"unknown plant {name!r}")
    return makers[name](**kw)
