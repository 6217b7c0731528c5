"""Switching logic and the assured control loop.

The loop pairs a learned neural controller (NC) with a verified baseline (BC)
under a decision module. A forward switching condition hands the plant to the
BC the moment the NC proposes an action whose one-step successor leaves the
recoverable region; a reverse switching condition hands it back once the NC
can be trusted again. While the BC drives, the NC keeps proposing actions in
shadow mode and every proposal becomes a training sample, so the NC improves
exactly on the situations it failed in.
"""

from dataclasses import dataclass, field

import numpy as np

from .plants import pancreas as ap
from .plants import rover as rv
from .rl import Transition, sample_batch, ddpg_update


class SafetyViolation(AssertionError):
    """An unsafe state was visited under the assured loop. This is a bug in
    the switching logic or the recoverability predicate, never tolerable."""


# ---------------------------------------------------------------------------
# recoverability predicates

def ip_recoverable(s, P):
    """Inside the certified invariant ellipsoid of the feedback law."""
    return float(s @ P @ s) <= 1.0


def rover_recoverable(s, params: rv.RoverParams):
    """Closest reading covers the standoff plus the current braking distance."""
    v = s[rv.V]
    need = params.d_safe + v * v / (2.0 * params.a_max) + params.epsilon
    return rv.min_reading(s) >= need


def ap_recoverable(s, params: ap.ApParams):
    """Simulate the pump-off response and watch for hypoglycemia.

    The rollout may stop as soon as insulin is falling (dI/dt <= 0, which
    under u = 0 happens exactly once, at the insulin peak) and is already
    below the level that can push glucose down through the threshold
    (I <= i_crit). From there glucose is repelled from the threshold, so no
    later state can be hypoglycemic. Hitting the iteration cap is treated as
    unrecoverable, which errs on the safe side.
    """
    thr = params.hypo_threshold
    i_crit = params.i_crit
    ke, kavi = params.ke, params.ka / params.vi
    E, g = params.step_matrix, params.drift_vector
    G, I, x = float(s[0]), float(s[1]), float(s[2])
    for _ in range(params.recoverability_cap):
        if G < thr:
            return False
        if I <= i_crit and (kavi * x - ke * I) <= 0.0:
            return True
        G, I, x = (E[0, 0] * G + E[0, 1] * I + E[0, 2] * x + g[0],
                   E[1, 0] * G + E[1, 1] * I + E[1, 2] * x + g[1],
                   E[2, 0] * G + E[2, 1] * I + E[2, 2] * x + g[2])
    return False


def ap_unsafe(s, params: ap.ApParams):
    return float(s[ap.G]) < params.hypo_threshold


# ---------------------------------------------------------------------------
# switching conditions

def fsc(s, a, step, recoverable):
    """Forward switching condition: the proposed action's one-step successor
    leaves the recoverable region. Uses the same integrator as the plant."""
    return not recoverable(step(s, a))


def rsc_horizon(s, policy, step, step_fsc, T):
    """Reverse switching for lookahead plants: a T-step rollout of the policy
    from s never triggers the forward condition (including at s itself)."""
    x = s
    for t in range(T + 1):
        a = policy(x)
        if step_fsc(x, a):
            return False
        if t < T:
            x = step(x, a)
    return True


def rsc_margin(s, params: rv.RoverParams):
    """Reverse switching for the rover: enough clearance that no single
    action can trip the forward condition within m steps."""
    need = (params.m_lookahead * params.v_max * params.dt
            + params.d_safe + params.d_br_max + params.epsilon)
    return rv.min_reading(s) >= need


# ---------------------------------------------------------------------------
# rewards

def ip_reward(s2, fsc_flag):
    """Upright bonus shaped by cart speed and pendulum angle; a rejected
    proposal earns nothing."""
    if fsc_flag:
        return 0.0
    return 10.0 - 10.0 * float(s2[1]) ** 2 - (1.0 - np.cos(float(s2[2])))


def rover_reward(s, s2, fsc_flag, params: rv.RoverParams):
    """Large penalty for rejected proposals, large bonus on reaching the
    target, otherwise a per-step charge growing with distance to go."""
    if fsc_flag:
        return -20_000.0
    if rv.distance_to_target(s2) <= params.reach_distance:
        return 10_000.0
    return -1.0 - 20.0 * rv.distance_to_target(s)


AP_R_UNRECOV = -10.6   # strong-hypoglycemia branch value at the boundary


def ap_reward(s2, fsc_flag):
    """Asymmetric glucose-tracking reward, continuous across its branches."""
    if fsc_flag:
        return AP_R_UNRECOV
    g = float(s2[ap.G])
    if abs(g) <= 1.0:
        return 10.0 - abs(g)
    if 1.0 < g <= 3.2:
        return 14.0 - 5.0 * g
    if g > 3.2:
        return 26.8 - 9.0 * g
    if -3.8 <= g < -1.0:
        return 16.0 - 7.0 * abs(g)
    return 65.4 - 20.0 * abs(g)


# ---------------------------------------------------------------------------
# decision module

NC, BC = "NC", "BC"


@dataclass
class DmState:
    holder: str = NC
    forward_switches: int = 0
    reverse_switches: int = 0
    last_switch_step: int = -1


def dm_transition(dm: DmState, fsc_flag, rsc_flag, step_index=0):
    """Advance the decision state machine one step.

    The holder changes NC -> BC when the proposal trips the forward condition
    and BC -> NC when the reverse condition holds; otherwise it stays put.
    """
    if dm.holder == NC and fsc_flag:
        dm.holder = BC
        dm.forward_switches += 1
        dm.last_switch_step = step_index
    elif dm.holder == BC and rsc_flag:
        dm.holder = NC
        dm.reverse_switches += 1
        dm.last_switch_step = step_index
    return dm


# ---------------------------------------------------------------------------
# adaptation module

def am_collect(s, a, step, recoverable, reward, goal):
    """Shadow-mode sample: simulate the proposal, reward it by branch.

    ``a`` is the proposal as the learner would emit it (possibly with
    exploration noise already added). The successor is hypothetical in the
    sense that the plant may be driven by the baseline this step.
    """
    s2 = step(s, a)
    fsc_flag = not recoverable(s2)
    r = reward(s, a, s2, fsc_flag)
    terminal = fsc_flag or bool(goal(s2))
    return Transition(s, np.atleast_1d(a), s2, r, terminal), fsc_flag


@dataclass
class Adapter:
    """Replay buffer plus learner networks for online retraining."""
    buffer: object
    nets: object            # rl.DdpgNets
    cfg: object             # rl.TrainingConfig
    updates: int = 0
    skipped: int = 0

    def retrain_step(self, rng):
        """One gradient update, gated by the caller to baseline-held steps."""
        batch = sample_batch(self.buffer, self.cfg.batch_size, rng)
        if batch is None:
            self.skipped += 1
            return False
        ddpg_update(self.nets, batch, self.cfg)
        self.updates += 1
        return True


# ---------------------------------------------------------------------------
# the assured run

@dataclass
class RunRecord:
    plant: str
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    holders: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    switch_events: list = field(default_factory=list)   # (step, "NC->BC" | "BC->NC")
    fsc_steps: list = field(default_factory=list)
    updates: int = 0
    reached_goal: bool = False

    @property
    def length(self):
        return len(self.actions)

    @property
    def total_reward(self):
        return float(sum(self.rewards))

    def to_jsonl(self):
        """One line per executed step; floats use repr for stable output."""
        lines = []
        for t in range(self.length):
            lines.append(
                '{"t": %d, "holder": "%s", "state": [%s], "action": [%s], '
                '"reward": %s, "next_state": [%s]}' % (
                    t, self.holders[t],
                    ", ".join(repr(float(v)) for v in self.states[t]),
                    ", ".join(repr(float(v)) for v in self.actions[t]),
                    repr(float(self.rewards[t])),
                    ", ".join(repr(float(v)) for v in self.states[t + 1]),
                ))
        return "\n".join(lines) + ("\n" if lines else "")


def run_nsa_trajectory(bundle, actor_policy, cfg, rng, adapter: Adapter = None,
                       init_state=None, noise_sigma=None):
    """Run one assured trajectory from a recoverable initial state.

    Per step: the learner proposes an action, the decision module routes
    control on that clean proposal, and the proposal is collected as a
    training sample. Exploration noise, when configured, perturbs only the
    shadow-mode samples taken while the baseline drives the plant; an action
    that actually reaches the plant is never noisy. While the baseline holds,
    the adapter performs one update per step. Any unsafe visited state raises
    SafetyViolation.
    """
    s = bundle.init_state(rng) if init_state is None else np.asarray(init_state, dtype=float)
    if not bundle.recoverable(s):
        raise ValueError("initial state must be recoverable")
    dm = DmState()
    bc = bundle.bc_controller()
    rec = RunRecord(plant=bundle.name)
    rec.states.append(s)

    for t in range(cfg.max_trajectory_len):
        a_nc = np.atleast_1d(actor_policy(s))
        tr, fsc_flag = am_collect(s, a_nc, bundle.step, bundle.recoverable,
                                  bundle.reward, bundle.goal)
        prev_holder = dm.holder
        rsc_flag = dm.holder == BC and bundle.rsc(s, actor_policy)
        dm_transition(dm, fsc_flag, rsc_flag, t)
        if dm.holder != prev_holder:
            rec.switch_events.append((t, f"{prev_holder}->{dm.holder}"))
        if fsc_flag:
            rec.fsc_steps.append(t)

        if dm.holder == NC:
            if fsc_flag:
                # cannot happen if the reverse condition is sound; refuse
                # to drive the plant with a rejected proposal either way
                raise SafetyViolation(
                    f"{bundle.name}: holder is NC with a proposal that trips the FSC")
            a_applied = a_nc
            s2 = tr.next_state
        else:
            if noise_sigma is not None:
                # shadow-mode sample: the stored proposal is perturbed for
                # exploration, the switching decision above is not
                a_shadow = np.clip(a_nc + rng.normal(0.0, noise_sigma, size=a_nc.shape),
                                   bundle.action_low, bundle.action_high)
                tr, _ = am_collect(s, a_shadow, bundle.step, bundle.recoverable,
                                   bundle.reward, bundle.goal)
            if prev_holder == NC:
                bc.reset()
            s2, a_applied = bc.step_plant(s, rng)

        if bundle.unsafe(s2):
            raise SafetyViolation(f"{bundle.name}: unsafe state visited at step {t}")

        if adapter is not None:
            adapter.buffer.push(tr)
            if dm.holder == BC:
                if adapter.retrain_step(rng):
                    rec.updates += 1

        rec.states.append(s2)
        rec.actions.append(a_applied)
        rec.holders.append(dm.holder)
        rec.rewards.append(bundle.reward(s, a_applied, s2, False))
        s = s2
        if bundle.goal(s):
            rec.reached_goal = True
            break
    return rec
