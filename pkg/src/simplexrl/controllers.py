"""Baseline (verified-safe) control laws and the neural-policy wrapper.

The baseline controllers are deliberately simple objects: a linear state
feedback for the pendulum, a stop-and-reorient procedure for the rover, and
pump-off for the pancreas. Each is safe from every recoverable state, which is
what lets the switching logic hand them the plant unconditionally.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .plants import rover as rv
from .plants.rover import RoverParams, ObstacleField, rover_step, ray_distance, braking_distance

# published pendulum feedback gain and Lyapunov matrix (quadratic form
# x^T P x <= 1 is the certified recoverable region for the gain below)
IP_GAIN = np.array([0.4072, 7.2373, 18.6269, 3.6725])
IP_LYAPUNOV = np.array([
    [1.0520, 0.2580, 1.2082, 0.1988],
    [0.2580, 2.2108, 4.6631, 1.0090],
    [1.2082, 4.6631, 33.9334, 4.0269],
    [0.1988, 1.0090, 4.0269, 0.8424],
])


@dataclass
class IpBcParams:
    K: np.ndarray = field(default_factory=lambda: IP_GAIN.copy())
    P: np.ndarray = field(default_factory=lambda: IP_LYAPUNOV.copy())
    action_limit: float = 4.95

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if not np.array_equal(self.P, self.P.T):
            raise ValueError("P must be symmetric")


def ip_bc_action(s, params: IpBcParams):
    """Linear state feedback Va = K . x, clamped to the motor range."""
    va = float(params.K @ s)
    lim = params.action_limit
    return -lim if va < -lim else (lim if va > lim else va)


def ap_bc_action(s):
    """The pancreas baseline shuts the pump off. Safety only, no performance."""
    return 0.0


# rover baseline procedure phases
BRAKING = "braking"
CHOOSING = "choosing_heading"
ROTATING = "rotating"
CRUISING = "cruising"
EMERGENCY = "emergency"


@dataclass(frozen=True)
class RoverBcState:
    phase: str = BRAKING
    heading: float = 0.0         # chosen safe heading, valid from ROTATING on


@dataclass
class RoverBcParams:
    omega_bc: float = np.pi      # reorientation rate while stopped (rad/s)
    cruise_speed_factor: float = 0.5   # cruise at v_max/2, halves d_br
    rotate_pulse_speed: float = 0.01   # m/s; heading is velocity direction,
                                       # so turning needs nonzero speed
    heading_samples: int = 128
    heading_tol: float = 1e-6


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _heading_clearance_ok(s, heading, field, params: RoverParams, recoverable):
    """A heading is safe if its forward clearance covers the standoff plus the
    worst-case braking distance, and a probe step of full acceleration along
    it lands in a recoverable state."""
    clear = ray_distance(s[:2], heading, field, params)
    if clear < params.d_safe + params.d_br_max + params.epsilon:
        return False
    probe = s.copy()
    probe[rv.THETA] = heading
    a = params.a_max * np.array([np.cos(heading), np.sin(heading)])
    try:
        nxt = rover_step(probe, a, params, field)
    except rv.SafetyViolationError:
        return False
    return recoverable(nxt)


def rover_bc_action(s, bc: RoverBcState, params: RoverParams, field: ObstacleField,
                    bc_params: RoverBcParams, recoverable, rng):
    """One step of the rover baseline procedure.

    Returns ((ax, ay), next_bc_state). Phases, in order: brake to a stop,
    pick a safe heading, rotate toward it with small velocity pulses, cruise
    along it. If the intended action's own successor would be unrecoverable
    the procedure restarts at braking; a stopped rover with no safe heading
    parks (zero action keeps v = 0, which cannot collide).
    """
    dt = params.dt
    phase, heading = bc.phase, bc.heading

    if phase == BRAKING and s[rv.V] <= 0.0:
        phase = CHOOSING

    if phase == BRAKING:
        rate = min(params.a_max, s[rv.V] / dt)
        a = -rate * np.array([np.cos(s[rv.THETA]), np.sin(s[rv.THETA])])
        return a, RoverBcState(BRAKING, heading)

    if phase == CHOOSING:
        for _ in range(bc_params.heading_samples):
            cand = rng.uniform(0.0, 2.0 * np.pi)
            if _heading_clearance_ok(s, cand, field, params, recoverable):
                return np.zeros(2), RoverBcState(ROTATING, cand)
        return np.zeros(2), RoverBcState(EMERGENCY, heading)

    if phase == EMERGENCY:
        return np.zeros(2), bc

    if phase == ROTATING:
        err = _wrap(heading - s[rv.THETA])
        max_turn = bc_params.omega_bc * dt
        aligned = abs(err) <= max(bc_params.heading_tol, 1e-12)
        if not aligned and abs(err) > max_turn:
            new_theta = s[rv.THETA] + np.sign(err) * max_turn
        else:
            new_theta = heading
        if aligned:
            phase = CRUISING
        else:
            # emit a velocity pulse in the stepped direction; the plant
            # derives heading from velocity, so this is the only way to turn
            vnew = bc_params.rotate_pulse_speed * np.array(
                [np.cos(new_theta), np.sin(new_theta)])
            vcur = s[rv.V] * np.array([np.cos(s[rv.THETA]), np.sin(s[rv.THETA])])
            a = (vnew - vcur) / dt
            nxt_bc = RoverBcState(ROTATING, heading)
            try:
                nxt = rover_step(s, a, params, field)
            except rv.SafetyViolationError:
                nxt = None
            if nxt is None or not recoverable(nxt):
                return _restart_braking(s, params)
            return a, nxt_bc

    if phase == CRUISING:
        target_v = bc_params.cruise_speed_factor * params.v_max
        vcur = s[rv.V] * np.array([np.cos(s[rv.THETA]), np.sin(s[rv.THETA])])
        vwant = target_v * np.array([np.cos(heading), np.sin(heading)])
        a = (vwant - vcur) / dt
        norm = np.hypot(a[0], a[1])
        if norm > params.a_max:
            a *= params.a_max / norm
        try:
            nxt = rover_step(s, a, params, field)
        except rv.SafetyViolationError:
            nxt = None
        if nxt is None or not recoverable(nxt):
            return _restart_braking(s, params)
        return a, RoverBcState(CRUISING, heading)

    raise ValueError(f"unknown baseline phase {phase!r}")


def _restart_braking(s, params: RoverParams):
    rate = min(params.a_max, s[rv.V] / params.dt)
    a = -rate * np.array([np.cos(s[rv.THETA]), np.sin(s[rv.THETA])])
    return a, RoverBcState(BRAKING, 0.0)


@dataclass
class NeuralController:
    """Actor network plus its action box. The box is enforced by the net's
    tanh head, this wrapper only checks dimensions and exposes a call."""

    actor: nn.Mlp
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.action_low = np.asarray(self.action_low, dtype=float)
        self.action_high = np.asarray(self.action_high, dtype=float)

    def action(self, s):
        return nc_action(self, s)


def nc_action(nc: NeuralController, s):
    """Evaluate the policy. Output is inside the action box by construction."""
    a = nn.forward(nc.actor, s)
    return np.atleast_1d(a)


def actor_box_params(low, high):
    """(offset, scale) mapping a tanh head onto the box [low, high]."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    return (low + high) / 2.0, (high - low) / 2.0
