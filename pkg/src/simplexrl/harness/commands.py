"""The experiment commands behind the CLI.

Every command takes (cfg, seed, out_dir), writes its artifacts under
out_dir, and returns 0. All randomness flows through labeled substreams of
the master seed, so outputs are byte-identical across reruns.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .. import nn, rl
from ..runtime import Adapter, run_nsa_trajectory
from ..seeding import substream
from .config import ConfigError, hidden_layers, make_bundle, training_config
from .metrics import MetricsTable, add_eval_row, eval_columns

DDPG_CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# checkpoints

def save_ddpg_checkpoint(nets: rl.DdpgNets, plant, path):
    doc = {
        "format_version": DDPG_CHECKPOINT_VERSION,
        "kind": "ddpg",
        "plant": plant,
        "actor": nn.net_to_doc(nets.actor),
        "critic": nn.net_to_doc(nets.critic),
        "actor_target": nn.net_to_doc(nets.actor_target),
        "critic_target": nn.net_to_doc(nets.critic_target),
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_ddpg_checkpoint(path, plant, tc: rl.TrainingConfig) -> rl.DdpgNets:
    """Rebuild the four networks; optimizer moments restart from zero."""
    if not os.path.isfile(path):
        raise ConfigError(f"checkpoint not found: {path}")
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != DDPG_CHECKPOINT_VERSION or doc.get("kind") != "ddpg":
        raise ConfigError(f"{path}: not a usable checkpoint")
    if doc.get("plant") != plant:
        raise ConfigError(f"{path}: checkpoint is for plant {doc.get('plant')!r}, "
                          f"config says {plant!r}")
    actor = nn.net_from_doc(doc["actor"])
    critic = nn.net_from_doc(doc["critic"])
    return rl.DdpgNets(actor, critic,
                       nn.net_from_doc(doc["actor_target"]),
                       nn.net_from_doc(doc["critic_target"]),
                       nn.OptimizerState.for_net(actor, tc.lr_actor),
                       nn.OptimizerState.for_net(critic, tc.lr_critic))


REPLAY_FORMAT_VERSION = 1


def save_replay_pool(buf: rl.ReplayBuffer, plant, path):
    """Persist the buffer contents, oldest first."""
    order = (buf._head - buf.size + np.arange(buf.size)) % buf.capacity
    np.savez(path,
             format_version=REPLAY_FORMAT_VERSION,
             plant=plant,
             states=buf.states[order],
             actions=buf.actions[order],
             next_states=buf.next_states[order],
             rewards=buf.rewards[order],
             terminals=buf.terminals[order])


def load_replay_pool(path, plant, capacity) -> rl.ReplayBuffer:
    """Rebuild a buffer from a saved pool.

    If the pool holds more entries than ``capacity``, the oldest overflow is
    dropped, matching what pushing the whole history through a FIFO of that
    capacity would leave behind.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"replay pool not found: {path}")
    with np.load(path, allow_pickle=False) as doc:
        if int(doc["format_version"]) != REPLAY_FORMAT_VERSION:
            raise ConfigError(f"{path}: not a usable replay pool")
        if str(doc["plant"]) != plant:
            raise ConfigError(f"{path}: replay pool is for plant {doc['plant']!r}, "
                              f"config says {plant!r}")
        states = doc["states"]
        n = min(len(states), capacity)
        buf = rl.ReplayBuffer(capacity, states.shape[1], doc["actions"].shape[1])
        buf.states[:n] = states[-n:]
        buf.actions[:n] = doc["actions"][-n:]
        buf.next_states[:n] = doc["next_states"][-n:]
        buf.rewards[:n] = doc["rewards"][-n:]
        buf.terminals[:n] = doc["terminals"][-n:]
    buf.size = n
    buf._head = n % capacity
    return buf


def fresh_nets(bundle, tc, cfg, rng) -> rl.DdpgNets:
    off, sca = bundle.action_offset_scale()
    actor_hidden, critic_hidden = hidden_layers(cfg, bundle)
    return rl.make_ddpg_nets(bundle.state_dim, bundle.action_dim, rng, tc,
                             actor_hidden=actor_hidden, critic_hidden=critic_hidden,
                             hidden_activation=bundle.hidden_activation,
                             action_offset=off, action_scale=sca,
                             state_scale=bundle.state_scale)


def actor_policy(nets: rl.DdpgNets):
    actor = nets.actor
    return lambda s: nn.forward(actor, s)


# ---------------------------------------------------------------------------
# training driver

@dataclass
class TrainTotals:
    steps: int = 0                 # transitions stored in the buffer
    episodes: int = 0
    unrec_episodes: int = 0
    aborted_episodes: int = 0
    goal_episodes: int = 0
    updates: int = 0
    return_sum: float = 0.0
    diverged: bool = False


def _nets_snapshot(nets):
    return tuple(n.copy() for n in (nets.actor, nets.critic,
                                    nets.actor_target, nets.critic_target))


def _nets_restore(nets, snap):
    live = (nets.actor, nets.critic, nets.actor_target, nets.critic_target)
    for net, saved in zip(live, snap):
        for p, q in zip(net.parameters(), saved.parameters()):
            p[...] = q


def _updates_in_episode(size_before, stored, threshold):
    """Stored steps that also ran an update: the i-th push updates exactly
    when the buffer has reached the warmup threshold."""
    if stored == 0:
        return 0
    first = max(1, threshold - size_before)            # first i that updates
    return max(0, stored - first + 1)


def train_loop(bundle, nets, tc, buf, rng, max_steps=None, max_updates=None,
               curve=None, curve_every=1_000):
    """Run training episodes until a step or update budget is spent.

    ``curve``, when given, is a MetricsTable receiving one aggregate row per
    ``curve_every`` stored steps.  If an update ever produces non-finite
    numbers the loop stops early, rolls the networks back to the snapshot
    taken at the previous curve mark, and reports ``totals.diverged``.
    """
    if max_steps is None and max_updates is None:
        raise ValueError("need a step or update budget")
    totals = TrainTotals()
    threshold = max(tc.warmup_steps, tc.batch_size)
    next_mark = curve_every
    window = []
    snap = _nets_snapshot(nets)
    while ((max_steps is None or totals.steps < max_steps)
           and (max_updates is None or totals.updates < max_updates)):
        size_before = len(buf)
        try:
            stats = rl.run_training_episode(bundle, nets, tc, buf, rng)
        except nn.TrainingDivergenceError:
            totals.diverged = True
            _nets_restore(nets, snap)
            break
        totals.episodes += 1
        totals.steps += max(stats.stored, 1)   # an aborted episode still spends budget
        totals.updates += _updates_in_episode(size_before, stats.stored, threshold)
        totals.unrec_episodes += int(stats.ended_unrecoverable)
        totals.aborted_episodes += int(stats.aborted)
        totals.goal_episodes += int(stats.reached_goal)
        totals.return_sum += stats.return_sum
        window.append(stats)
        if curve is not None and totals.steps >= next_mark:
            n = len(window)
            curve.add_row(
                step=totals.steps,
                episodes=totals.episodes,
                avg_episode_return=float(np.mean([w.return_sum for w in window])),
                avg_episode_length=float(np.mean([w.length for w in window])),
                unrec_fraction=sum(w.ended_unrecoverable for w in window) / n,
                goal_fraction=sum(w.reached_goal for w in window) / n,
                buffer_size=len(buf),
                updates=totals.updates,
            )
            window = []
            next_mark = (totals.steps // curve_every + 1) * curve_every
            snap = _nets_snapshot(nets)
    return totals


def curve_table():
    return MetricsTable(["step", "episodes", "avg_episode_return",
                         "avg_episode_length", "unrec_fraction",
                         "goal_fraction", "buffer_size", "updates"])


def _shared_init_states(bundle, seed, n):
    rng = substream(seed, "eval-init")
    return [bundle.init_state(rng) for _ in range(n)]


# ---------------------------------------------------------------------------
# commands

def cmd_train(cfg, seed, out):
    bundle = make_bundle(cfg)
    tc = training_config(cfg, bundle)
    nets = fresh_nets(bundle, tc, cfg, substream(seed, "nets"))
    buf = rl.ReplayBuffer(tc.buffer_capacity, bundle.state_dim, bundle.action_dim)
    curve = curve_table()
    totals = train_loop(bundle, nets, tc, buf, substream(seed, "train"),
                        max_steps=tc.max_steps, curve=curve,
                        curve_every=cfg.training.curve_every)
    curve.write(os.path.join(out, "curve.csv"))
    save_ddpg_checkpoint(nets, cfg.plant, os.path.join(out, "checkpoint.json"))
    save_replay_pool(buf, cfg.plant, os.path.join(out, "replay.npz"))
    summary = MetricsTable(["steps", "episodes", "unrec_episodes",
                            "aborted_episodes", "goal_episodes", "updates"])
    summary.add_row(steps=totals.steps, episodes=totals.episodes,
                    unrec_episodes=totals.unrec_episodes,
                    aborted_episodes=totals.aborted_episodes,
                    goal_episodes=totals.goal_episodes, updates=totals.updates)
    summary.write(os.path.join(out, "train_summary.csv"))
    if totals.diverged:
        raise nn.TrainingDivergenceError(
            "training diverged at step %d; the checkpoint on disk holds the "
            "last finite networks" % totals.steps)
    return 0


def cmd_run_nsa(cfg, seed, out):
    bundle = make_bundle(cfg)
    tc = training_config(cfg, bundle)
    if cfg.nsa.checkpoint is not None:
        nets = load_ddpg_checkpoint(cfg.nsa.checkpoint, cfg.plant, tc)
    else:
        nets = fresh_nets(bundle, tc, cfg, substream(seed, "nets"))
    adapter = None
    if cfg.nsa.retrain:
        if cfg.nsa.replay is not None:
            buf = load_replay_pool(cfg.nsa.replay, cfg.plant, tc.buffer_capacity)
        else:
            buf = rl.ReplayBuffer(tc.buffer_capacity, bundle.state_dim, bundle.action_dim)
        adapter = Adapter(buf, nets, tc)
    noise = tc.noise.sigma if (cfg.nsa.retrain and tc.noise.kind == "gaussian") else None
    run_cfg = replace(tc, max_trajectory_len=cfg.nsa.max_trajectory_len)
    policy = actor_policy(nets)

    trajs = MetricsTable(["traj", "length", "total_reward", "forward_switches",
                          "reverse_switches", "fsc_count", "updates",
                          "reached_goal", "bc_steps"])
    switches = MetricsTable(["traj", "step", "kind"])
    records_path = os.path.join(out, "records.jsonl")
    rec_file = open(records_path, "w") if cfg.nsa.save_records else None
    try:
        for i in range(cfg.nsa.n_trajectories):
            rec = run_nsa_trajectory(bundle, policy, run_cfg,
                                     substream(seed, "nsa", i),
                                     adapter=adapter, noise_sigma=noise)
            fwd = sum(1 for _, k in rec.switch_events if k == "NC->BC")
            rev = sum(1 for _, k in rec.switch_events if k == "BC->NC")
            trajs.add_row(traj=i, length=rec.length,
                          total_reward=rec.total_reward,
                          forward_switches=fwd, reverse_switches=rev,
                          fsc_count=len(rec.fsc_steps), updates=rec.updates,
                          reached_goal=rec.reached_goal,
                          bc_steps=sum(1 for h in rec.holders if h == "BC"))
            for t, kind in rec.switch_events:
                switches.add_row(traj=i, step=t, kind=kind)
            if rec_file is not None:
                rec_file.write(rec.to_jsonl())
    finally:
        if rec_file is not None:
            rec_file.close()

    trajs.write(os.path.join(out, "trajectories.csv"))
    switches.write(os.path.join(out, "switches.csv"))
    summary = MetricsTable(["n_trajectories", "forward_switch_trajs",
                            "total_bc_steps", "total_updates", "goal_trajs"])
    summary.add_row(
        n_trajectories=cfg.nsa.n_trajectories,
        forward_switch_trajs=sum(1 for r in trajs.rows if r[3] > 0),
        total_bc_steps=sum(r[8] for r in trajs.rows),
        total_updates=sum(r[6] for r in trajs.rows),
        goal_trajs=sum(1 for r in trajs.rows if r[7]),
    )
    summary.write(os.path.join(out, "nsa_summary.csv"))
    if cfg.nsa.retrain:
        save_ddpg_checkpoint(nets, cfg.plant,
                             os.path.join(out, "retrained_checkpoint.json"))
    return 0


def cmd_eval(cfg, seed, out):
    bundle = make_bundle(cfg)
    tc = training_config(cfg, bundle)
    entries = []
    if cfg.eval.checkpoint is not None:
        entries.append((_label(cfg.eval.checkpoint),
                        load_ddpg_checkpoint(cfg.eval.checkpoint, cfg.plant, tc)))
    else:
        entries.append(("fresh", fresh_nets(bundle, tc, cfg, substream(seed, "nets"))))
    if cfg.eval.compare_to is not None:
        entries.append((_label(cfg.eval.compare_to),
                        load_ddpg_checkpoint(cfg.eval.compare_to, cfg.plant, tc)))

    inits = _shared_init_states(bundle, seed, cfg.eval.n_trajectories)
    table = MetricsTable(eval_columns())
    for label, nets in entries:
        rep = rl.evaluate_policy(bundle, actor_policy(nets),
                                 cfg.eval.n_trajectories,
                                 substream(seed, "eval"),
                                 horizon=cfg.eval.horizon, init_states=inits)
        add_eval_row(table, label, rep)
    table.write(os.path.join(out, "metrics.csv"))
    return 0


def _label(path):
    base = os.path.basename(path)
    return base[:-5] if base.endswith(".json") else base


def cmd_compare_srl(cfg, seed, out):
    """Train once per strategy from identical initial weights, then evaluate
    all three on one shared set of initial states."""
    bundle = make_bundle(cfg)
    table = MetricsTable(["strategy", "steps", "episodes", "unrec_episodes",
                          "aborted_episodes", "updates", "eval_unrecoverable",
                          "eval_complete", "eval_targets", "eval_timeouts",
                          "eval_avg_return", "eval_avg_length"])
    inits = _shared_init_states(bundle, seed, cfg.eval.n_trajectories)
    for strategy in (rl.PUA, rl.BC_FILTER, rl.RND_FILTER):
        tc = replace(training_config(cfg, bundle), srl_strategy=strategy)
        nets = fresh_nets(bundle, tc, cfg, substream(seed, "nets"))
        buf = rl.ReplayBuffer(tc.buffer_capacity, bundle.state_dim,
                              bundle.action_dim)
        totals = train_loop(bundle, nets, tc, buf,
                            substream(seed, "train-" + strategy),
                            max_steps=tc.max_steps)
        rep = rl.evaluate_policy(bundle, actor_policy(nets),
                                 cfg.eval.n_trajectories,
                                 substream(seed, "eval-" + strategy),
                                 horizon=cfg.eval.horizon, init_states=inits)
        table.add_row(strategy=strategy, steps=totals.steps,
                      episodes=totals.episodes,
                      unrec_episodes=totals.unrec_episodes,
                      aborted_episodes=totals.aborted_episodes,
                      updates=totals.updates,
                      eval_unrecoverable=rep.unrecoverable,
                      eval_complete=rep.complete, eval_targets=rep.targets,
                      eval_timeouts=rep.timeouts,
                      eval_avg_return=float(rep.avg_return),
                      eval_avg_length=float(rep.avg_length))
        save_ddpg_checkpoint(nets, cfg.plant,
                             os.path.join(out, f"checkpoint_{strategy}.json"))
    table.write(os.path.join(out, "strategies.csv"))
    return 0


def cmd_extend_training(cfg, seed, out):
    """Continue plain training from a checkpoint for a fixed number of
    updates, evaluating before and after on one shared initial-state set."""
    if cfg.extend.checkpoint is None:
        raise ConfigError("[extend] checkpoint is required")
    if cfg.extend.extra_updates <= 0:
        raise ConfigError("[extend] extra_updates must be positive")
    bundle = make_bundle(cfg)
    tc = training_config(cfg, bundle)
    nets = load_ddpg_checkpoint(cfg.extend.checkpoint, cfg.plant, tc)
    inits = _shared_init_states(bundle, seed, cfg.eval.n_trajectories)

    before = rl.evaluate_policy(bundle, actor_policy(nets),
                                cfg.eval.n_trajectories, substream(seed, "eval"),
                                horizon=cfg.eval.horizon, init_states=inits)
    if cfg.extend.replay is not None:
        buf = load_replay_pool(cfg.extend.replay, cfg.plant, tc.buffer_capacity)
    else:
        buf = rl.ReplayBuffer(tc.buffer_capacity, bundle.state_dim, bundle.action_dim)
    totals = train_loop(bundle, nets, tc, buf, substream(seed, "extend"),
                        max_updates=cfg.extend.extra_updates)
    after = rl.evaluate_policy(bundle, actor_policy(nets),
                               cfg.eval.n_trajectories, substream(seed, "eval"),
                               horizon=cfg.eval.horizon, init_states=inits)

    table = MetricsTable(eval_columns() + ["updates"])
    row = lambda rep: {c: v for c, v in zip(eval_columns()[1:], (
        rep.n_trajs, rep.unrecoverable, rep.complete, rep.targets,
        rep.timeouts, float(rep.avg_return), float(rep.avg_length)))}
    table.add_row(label="IT", updates=0, **row(before))
    table.add_row(label=f"+{totals.updates} EIT", updates=totals.updates,
                  **row(after))
    table.write(os.path.join(out, "metrics.csv"))
    save_ddpg_checkpoint(nets, cfg.plant,
                         os.path.join(out, "extended_checkpoint.json"))
    return 0
