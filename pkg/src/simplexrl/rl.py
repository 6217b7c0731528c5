"""Off-policy actor-critic training (DDPG) with experience replay and
pluggable handling of unsafe proposals.

Three strategies are implemented for the moment the policy proposes an action
whose simulated successor leaves the recoverable region:

* ``PUA``         penalize the proposal, store it terminal, never apply it,
                  end the episode safely
* ``BC_FILTER``   apply and store the baseline's action instead, continue
* ``RND_FILTER``  apply and store a uniformly sampled recoverable action

The penalized-but-never-applied strategy trains on exactly the experiences
that matter (what not to do) without ever subjecting the plant to them.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    reward: float
    terminal: bool


class NoRecoverableActionError(RuntimeError):
    """Rejection sampling could not find a recoverable action."""


class ReplayBuffer:
    """Bounded FIFO of transitions in preallocated arrays.

    Once full, each push evicts the oldest entry. Sampling is uniform with
    replacement and driven entirely by the caller's generator.
    """

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = int(capacity)
        self.states = np.empty((capacity, state_dim))
        self.actions = np.empty((capacity, action_dim))
        self.next_states = np.empty((capacity, state_dim))
        self.rewards = np.empty(capacity)
        self.terminals = np.empty(capacity)
        self.size = 0
        self._head = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        i = self._head
        self.states[i] = t.state
        self.actions[i] = t.action
        self.next_states[i] = t.next_state
        self.rewards[i] = t.reward
        self.terminals[i] = 1.0 if t.terminal else 0.0
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def entry(self, i):
        """i-th oldest entry, mainly for tests."""
        if not 0 <= i < self.size:
            raise IndexError(i)
        j = (self._head - self.size + i) % self.capacity
        return Transition(self.states[j].copy(), self.actions[j].copy(),
                          self.next_states[j].copy(), float(self.rewards[j]),
                          bool(self.terminals[j]))


def buffer_push(buf: ReplayBuffer, t: Transition):
    return buf.push(t)


def sample_batch(buf: ReplayBuffer, k, rng):
    """k transitions uniform with replacement, or None while the buffer is
    still smaller than k (callers skip the update)."""
    if buf.size < k:
        return None
    idx = rng.integers(0, buf.size, size=k)
    idx = (buf._head - buf.size + idx) % buf.capacity
    return (buf.states[idx], buf.actions[idx], buf.next_states[idx],
            buf.rewards[idx], buf.terminals[idx])


@dataclass
class NoiseSpec:
    kind: str = "gaussian"          # "gaussian" or "none"
    sigma: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if np.any(self.sigma < 0) or not np.all(np.isfinite(self.sigma)):
                raise ValueError("noise sigma must be finite and nonnegative")

    def perturb(self, a, rng, low, high):
        if self.kind == "none" or self.sigma is None:
            return a
        return np.clip(a + rng.normal(0.0, self.sigma, size=a.shape), low, high)


PUA, BC_FILTER, RND_FILTER = "PUA", "BC_FILTER", "RND_FILTER"


@dataclass
class TrainingConfig:
    gamma: float = 0.99
    batch_size: int = 64
    max_steps: int = 200_000
    max_trajectory_len: int = 500
    tau: float = 0.005
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec("none"))
    srl_strategy: str = PUA
    r_unrecov: float = 0.0
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 1_000
    rejection_cap: int = 10_000

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.srl_strategy not in (PUA, BC_FILTER, RND_FILTER):
            raise ValueError(f"unknown strategy {self.srl_strategy!r}")
        if max(self.warmup_steps, self.batch_size) > self.buffer_capacity:
            raise ValueError("buffer capacity below the update threshold")


@dataclass
class DdpgNets:
    actor: nn.Mlp
    critic: nn.Mlp
    actor_target: nn.Mlp
    critic_target: nn.Mlp
    opt_actor: nn.OptimizerState
    opt_critic: nn.OptimizerState


def make_ddpg_nets(state_dim, action_dim, rng, cfg: TrainingConfig,
                   actor_hidden=(32, 32), critic_hidden=(64, 64),
                   hidden_activation="relu", action_offset=None, action_scale=None,
                   state_scale=None):
    """Fresh actor/critic pair with target copies and optimizers.

    The critic concatenates state and action at its input; its input scaling
    reuses the actor's state conditioning and the action box half-width.
    """
    state_scale = np.ones(state_dim) if state_scale is None else np.asarray(state_scale, float)
    action_scale = np.ones(action_dim) if action_scale is None else np.asarray(action_scale, float)
    actor = nn.init_mlp([state_dim, *actor_hidden, action_dim], rng,
                        hidden_activation=hidden_activation, output_activation="tanh",
                        output_scale=action_scale, output_offset=action_offset,
                        input_scale=state_scale)
    critic_in_scale = np.concatenate([state_scale, np.maximum(action_scale, 1e-12)])
    critic = nn.init_mlp([state_dim + action_dim, *critic_hidden, 1], rng,
                         hidden_activation=hidden_activation, output_activation="linear",
                         input_scale=critic_in_scale)
    return DdpgNets(actor, critic, actor.copy(), critic.copy(),
                    nn.OptimizerState.for_net(actor, cfg.lr_actor),
                    nn.OptimizerState.for_net(critic, cfg.lr_critic))


def critic_targets(nets: DdpgNets, next_states, rewards, terminals, gamma):
    """y = r + gamma * (1 - terminal) * Q'(s', pi'(s')), batched."""
    a2 = nn.forward(nets.actor_target, next_states)
    q2 = nn.forward(nets.critic_target, np.concatenate([next_states, a2], axis=1))[:, 0]
    return rewards + gamma * (1.0 - terminals) * q2


def ddpg_update(nets: DdpgNets, batch, cfg: TrainingConfig):
    """One gradient step on critic and actor plus target tracking.

    Returns the critic's mean squared TD error before the step.
    """
    states, actions, next_states, rewards, terminals = batch
    k = len(states)

    y = critic_targets(nets, next_states, rewards, terminals, cfg.gamma)
    sa = np.concatenate([states, actions], axis=1)
    q = nn.forward(nets.critic, sa)[:, 0]
    err = q - y
    critic_loss = float(err @ err) / k
    grads, _ = nn.backward(nets.critic, sa, (2.0 / k) * err[:, None])
    nn.apply_gradients(nets.critic, grads, nets.opt_critic)

    # actor ascends mean Q(s, pi(s)): chain dQ/da through the actor
    a_pi = nn.forward(nets.actor, states)
    sa_pi = np.concatenate([states, a_pi], axis=1)
    _, dq_dsa = nn.backward(nets.critic, sa_pi, np.full((k, 1), 1.0 / k))
    dq_da = dq_dsa[:, states.shape[1]:]
    a_grads, _ = nn.backward(nets.actor, states, -dq_da)
    nn.apply_gradients(nets.actor, a_grads, nets.opt_actor)

    nn.soft_update(nets.actor_target, nets.actor, cfg.tau)
    nn.soft_update(nets.critic_target, nets.critic, cfg.tau)
    return critic_loss


@dataclass
class EpisodeStats:
    length: int = 0
    return_sum: float = 0.0
    ended_unrecoverable: bool = False
    reached_goal: bool = False
    stored: int = 0
    filtered: int = 0
    aborted: bool = False


def run_training_episode(bundle, nets: DdpgNets, cfg: TrainingConfig, buf: ReplayBuffer,
                         rng, update=True, init_state=None):
    """One training episode under the configured unsafe-action strategy.

    Proposals are exploration-noised, then gated: a proposal whose simulated
    successor is unrecoverable is handled per strategy and never applied
    as-is. One gradient update runs per applied step once the buffer holds
    ``warmup_steps`` entries.
    """
    s = bundle.init_state(rng) if init_state is None else np.asarray(init_state, float)
    stats = EpisodeStats()
    for _ in range(cfg.max_trajectory_len):
        a = np.atleast_1d(nn.forward(nets.actor, s))
        a = cfg.noise.perturb(a, rng, bundle.action_low, bundle.action_high)
        s2 = bundle.step(s, a)
        if not bundle.recoverable(s2):
            if cfg.srl_strategy == PUA:
                # the proposal becomes a terminal training sample and the
                # episode ends here; the plant never sees the action
                buf.push(Transition(s, a, s2, cfg.r_unrecov, True))
                stats.stored += 1
                stats.return_sum += cfg.r_unrecov
                stats.ended_unrecoverable = True
                if update:
                    _maybe_update(nets, cfg, buf, rng)
                break
            if cfg.srl_strategy == BC_FILTER:
                a = np.atleast_1d(bundle.filter_bc_action(s))
                s2 = bundle.step(s, a)
            else:
                try:
                    a, s2 = _sample_recoverable(bundle, s, rng, cfg.rejection_cap)
                except NoRecoverableActionError:
                    stats.aborted = True
                    break
            stats.filtered += 1

        r = bundle.reward(s, a, s2, False)
        terminal = bool(bundle.goal(s2))
        buf.push(Transition(s, a, s2, r, terminal))
        stats.stored += 1
        stats.return_sum += r
        stats.length += 1
        if update:
            _maybe_update(nets, cfg, buf, rng)
        s = s2
        if terminal:
            stats.reached_goal = True
            break
    return stats


def _maybe_update(nets, cfg, buf, rng):
    if buf.size >= max(cfg.warmup_steps, cfg.batch_size):
        batch = sample_batch(buf, cfg.batch_size, rng)
        if batch is not None:
            ddpg_update(nets, batch, cfg)


def _sample_recoverable(bundle, s, rng, cap):
    for _ in range(cap):
        a = rng.uniform(bundle.action_low, bundle.action_high)
        s2 = bundle.step(s, a)
        if bundle.recoverable(s2):
            return a, s2
    raise NoRecoverableActionError(
        f"{bundle.name}: no recoverable action in {cap} uniform samples")


@dataclass
class EvalReport:
    n_trajs: int = 0
    unrecoverable: int = 0
    complete: int = 0            # ran the full horizon
    targets: int = 0             # reached the goal (rover)
    timeouts: int = 0            # rover synonym for complete
    total_return: float = 0.0
    total_length: int = 0

    @property
    def avg_return(self):
        return self.total_return / self.n_trajs if self.n_trajs else 0.0

    @property
    def avg_length(self):
        return self.total_length / self.n_trajs if self.n_trajs else 0.0


def evaluate_policy(bundle, policy, n_trajs, rng, r_unrecov=None, horizon=500,
                    init_states=None):
    """Deterministic rollouts; a trajectory ends the moment the policy
    proposes an unrecoverable action (counted, penalized, step not run)."""
    if r_unrecov is None:
        r_unrecov = bundle.r_unrecov
    rep = EvalReport(n_trajs=n_trajs)
    for i in range(n_trajs):
        s = (bundle.init_state(rng) if init_states is None
             else np.asarray(init_states[i], dtype=float))
        ret = 0.0
        steps = 0
        for _ in range(horizon):
            a = np.atleast_1d(policy(s))
            s2 = bundle.step(s, a)
            if not bundle.recoverable(s2):
                rep.unrecoverable += 1
                ret += r_unrecov
                break
            ret += bundle.reward(s, a, s2, False)
            steps += 1
            s = s2
            if bundle.goal(s):
                rep.targets += 1
                break
        else:
            rep.complete += 1
            rep.timeouts += 1
        rep.total_return += ret
        rep.total_length += steps
    return rep
