"""ChatDQN learner: epsilon-greedy selection restricted to candidate
clusters, FIFO replay memory, a periodically synchronized target network,
TD targets over the next turn's candidate clusters, and the training and
greedy-evaluation loops.

States live in replay as tuples of global sentence ids (already truncated
to the history cap); the environment materializes them into padded batches
on demand.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clustering import ClusterModel
from .corpus import Corpus
from .embeddings import WordEmbeddingTable
from .environment import DialogueEnv, episode_reward
from .neuralnet import Adam, QNetwork, qnet_loss_and_grads

__all__ = [
    "AgentConfig",
    "Transition",
    "ReplayMemory",
    "RunReport",
    "EvalResult",
    "ChatDQNAgent",
    "select_action",
    "epsilon_at",
    "compute_targets",
    "moving_average",
    "train",
    "evaluate",
    "stable_hash",
]


@dataclass
class AgentConfig:
    """Hyperparameters of one ChatDQN run.

    embedding_dim is 100 or 300 for the shipped GloVe files but any positive
    dim is accepted (synthetic tables are smaller).
    """

    n_actions: int = 100
    embedding_dim: int = 100
    hidden_dim: int = 256
    candidates: int = 3
    history_len: int = 50
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int | None = None  # default: learn_steps // 2
    burn_in: int = 3000
    batch_size: int = 128
    target_sync_period: int = 10_000
    learn_steps: int = 50_000
    test_steps: int = 100_000
    memory_capacity: int = 10_000
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("need 0 < gamma <= 1")
        if self.burn_in > self.learn_steps:
            raise ValueError("burn_in must not exceed learn_steps")
        for name in ("n_actions", "embedding_dim", "hidden_dim", "candidates",
                     "history_len", "batch_size", "target_sync_period",
                     "memory_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learn_steps < 0 or self.test_steps < 1 or self.burn_in < 0:
            raise ValueError("invalid step budget")
        if self.batch_size > self.memory_capacity:
            raise ValueError("batch_size must not exceed memory_capacity")
        if self.epsilon_decay_steps is not None and self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be >= 1")


@dataclass(frozen=True)
class Transition:
    """Replayed step; states are global-sentence-id tuples (see module doc)."""

    s: tuple[int, ...]
    a: int
    r: int
    s_next: tuple[int, ...]
    done: bool
    candidate_ids_next: tuple[int, ...]  # dedup'd cluster ids of the next turn


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._items)

    @property
    def items(self) -> list[Transition]:
        return list(self._items)

    def append(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._pos] = t  # overwrite oldest
            self._pos = (self._pos + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if n > len(self._items):
            raise ValueError(f"cannot sample {n} of {len(self._items)} transitions")
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]


@dataclass
class RunReport:
    """Per-episode training rewards plus evaluation summaries.

    wall_clock_s is informational only and is never serialized (reports must
    be byte-identical across reruns).
    """

    episode_rewards: list[int] = field(default_factory=list)
    moving_avg: list[float] = field(default_factory=list)
    episodes: int = 0
    steps: int = 0
    config_hash: str = ""
    eval_train_mean: float | None = None
    eval_test_mean: float | None = None
    eval_budget_steps: int | None = None
    wall_clock_s: float | None = None


@dataclass
class EvalResult:
    mean_reward: float
    episode_rewards: list[int]
    dialogue_ids: list[str]
    steps_used: int
    truncated: bool


def stable_hash(*parts) -> int:
    """Platform-stable 64-bit hash used to derive per-dialogue rng streams."""
    h = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def select_action(qvals, candidate_ids, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the candidate clusters only.

    Duplicate candidate ids collapse to a set; greedy ties break to the
    lowest id. The rng is consumed identically on both branches so paired
    evaluations stay aligned.
    """
    ids = sorted(set(int(i) for i in candidate_ids))
    if not ids:
        raise ValueError("empty candidate set")
    explore = rng.random() < epsilon
    pick = ids[int(rng.integers(len(ids)))]  # drawn on both branches: keeps
    if explore:                              # stream consumption identical
        return pick
    qvals = np.asarray(qvals)
    best = ids[0]
    for i in ids[1:]:
        if qvals[i] > qvals[best]:
            best = i
    return int(best)


def epsilon_at(step: int, cfg: AgentConfig) -> float:
    """epsilon_start through burn-in, then a linear anneal to epsilon_end
    over epsilon_decay_steps (default learn_steps // 2), constant after."""
    if step < 0:
        raise ValueError("step must be >= 0")
    decay = cfg.epsilon_decay_steps
    if decay is None:
        decay = max(1, cfg.learn_steps // 2)
    progress = (step - cfg.burn_in) / decay
    progress = min(1.0, max(0.0, progress))
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress


def compute_targets(
    transitions: Sequence[Transition],
    target_net: QNetwork,
    gamma: float,
    materialize: Callable[[Sequence[tuple[int, ...]]], tuple],
) -> np.ndarray:
    """TD targets: r for terminal steps, else r + gamma * max over the next
    turn's candidate clusters of the target network's Q-values."""
    if not transitions:
        raise ValueError("empty batch")
    y = np.array([t.r for t in transitions], dtype=np.float64)
    live = [i for i, t in enumerate(transitions) if not t.done]
    if live:
        X, lengths = materialize([transitions[i].s_next for i in live])
        Q = target_net.forward(X, lengths, train_mode=False)
        for pos, i in enumerate(live):
            cand = transitions[i].candidate_ids_next
            y[i] += gamma * float(max(Q[pos, c] for c in cand))
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite TD target")
    return y


class ChatDQNAgent:
    """Owns the online/target networks, optimizer, replay memory, and the
    named rng streams that make runs reproducible."""

    def __init__(self, cfg: AgentConfig):
        self.cfg = cfg
        self.net = QNetwork(
            cfg.embedding_dim, cfg.hidden_dim, cfg.n_actions,
            dropout_rate=cfg.dropout_rate,
            rng=np.random.default_rng([cfg.seed, 0]),
        )
        self.target = self.net.clone()
        self.optimizer = Adam(self.net.params(), lr=cfg.learning_rate)
        self.memory = ReplayMemory(cfg.memory_capacity)
        self.rng_explore = np.random.default_rng([cfg.seed, 3])
        self.rng_replay = np.random.default_rng([cfg.seed, 4])
        self.rng_dropout = np.random.default_rng([cfg.seed, 5])
        self.global_step = 0
        self.sync_history: list[int] = []

    def sync_target(self) -> None:
        self.target.load_params(self.net.params())

    def train_step(self, batch: Sequence[Transition], materialize) -> float:
        """One TD regression step on a minibatch; returns the batch loss."""
        y = compute_targets(batch, self.target, self.cfg.gamma, materialize)
        X, lengths = materialize([t.s for t in batch])
        actions = np.array([t.a for t in batch], dtype=np.int64)
        loss, grads = qnet_loss_and_grads(
            self.net, X, lengths, actions, y,
            train_mode=True, rng=self.rng_dropout,
        )
        self.optimizer.step(self.net.params(), grads)
        return loss


def moving_average(values: Sequence[float], window: int = 100) -> list[float]:
    """Trailing mean over at most `window` values, one point per input."""
    out = []
    csum = 0.0
    vals = list(values)
    for i, v in enumerate(vals):
        csum += v
        if i >= window:
            csum -= vals[i - window]
        out.append(csum / min(i + 1, window))
    return out


def train(
    corpus: Corpus,
    cfg: AgentConfig,
    sentence_model: ClusterModel,
    table: WordEmbeddingTable,
    dialogue_ids: Sequence[str] | None = None,
    config_hash: str = "",
    log: Callable[[str], None] | None = None,
) -> tuple[RunReport, ChatDQNAgent, DialogueEnv]:
    """Run the learning loop on a dialogue split (default: whole corpus).

    Episodes are sampled uniformly with replacement; candidate distractors
    come from the split itself. Training stops at the first episode boundary
    at or past cfg.learn_steps. Returns the report, the trained agent, and
    the environment (reusable for greedy evaluation on the same split).
    """
    split = corpus if dialogue_ids is None else corpus.subset(dialogue_ids)
    if len(split) == 0:
        raise ValueError("empty training split")
    if sentence_model.k != cfg.n_actions:
        raise ValueError(
            f"cluster model has k={sentence_model.k} but config expects {cfg.n_actions}"
        )
    env = DialogueEnv(
        split, sentence_model, table, candidates=cfg.candidates,
        rng=np.random.default_rng([cfg.seed, 6]),
    )
    agent = ChatDQNAgent(cfg)
    rng_episode = np.random.default_rng([cfg.seed, 1])
    rng_cand = np.random.default_rng([cfg.seed, 2])
    started = time.monotonic()
    rewards: list[int] = []
    cap = cfg.history_len

    while agent.global_step < cfg.learn_steps:
        d = split.dialogues[int(rng_episode.integers(len(split)))]
        state = env.reset(d)
        cands = env.make_candidates(state, rng_cand)
        ep_rewards: list[int] = []
        while True:
            eps = epsilon_at(agent.global_step, cfg)
            X, lengths = env.batch_states([state.history_ids[-cap:]])
            q = agent.net.forward(X, lengths, train_mode=False)[0]
            action = select_action(q, cands.action_ids, eps, agent.rng_explore)
            next_state, r, done = env.step(state, action, cands)
            next_cands = None if done else env.make_candidates(next_state, rng_cand)
            agent.memory.append(
                Transition(
                    s=state.history_ids[-cap:],
                    a=action,
                    r=r,
                    s_next=next_state.history_ids[-cap:],
                    done=done,
                    candidate_ids_next=(
                        () if next_cands is None
                        else tuple(sorted(set(next_cands.action_ids)))
                    ),
                )
            )
            agent.global_step += 1
            ep_rewards.append(r)
            if len(agent.memory) >= max(cfg.burn_in, cfg.batch_size):
                batch = agent.memory.sample(cfg.batch_size, agent.rng_replay)
                agent.train_step(batch, env.batch_states)
            if agent.global_step % cfg.target_sync_period == 0:
                agent.sync_target()
                agent.sync_history.append(agent.global_step)
            if done:
                break
            state, cands = next_state, next_cands
        rewards.append(episode_reward(ep_rewards))
        if log is not None and len(rewards) % 200 == 0:
            ma = float(np.mean(rewards[-100:]))
            log(f"episode {len(rewards)}: step {agent.global_step}, ma100 {ma:+.3f}")

    report = RunReport(
        episode_rewards=rewards,
        moving_avg=moving_average(rewards),
        episodes=len(rewards),
        steps=agent.global_step,
        config_hash=config_hash,
        wall_clock_s=time.monotonic() - started,
    )
    return report, agent, env


def evaluate(
    net: QNetwork,
    corpus: Corpus,
    cfg: AgentConfig,
    sentence_model: ClusterModel,
    table: WordEmbeddingTable,
    dialogue_ids: Sequence[str] | None = None,
    seed: int = 0,
    policy: Callable | None = None,
    env: DialogueEnv | None = None,
) -> EvalResult:
    """Greedy (epsilon=0) evaluation: one pass over the dialogue set, capped
    at cfg.test_steps env turns.

    Candidate draws use a per-dialogue rng derived from (seed, dialogue id),
    so different policies face identical candidate sequences. `policy` (for
    stubs/oracles) takes (state, cands, env) and returns an action id; the
    default is the greedy policy of `net`.
    """
    subset = corpus if dialogue_ids is None else corpus.subset(dialogue_ids)
    if len(subset) == 0:
        raise ValueError("empty evaluation set")
    if env is None:
        env = DialogueEnv(
            subset, sentence_model, table, candidates=cfg.candidates,
            rng=np.random.default_rng([seed, 7]),
        )
    cap = cfg.history_len

    def greedy(state, cands, env_, rng):
        X, lengths = env.batch_states([state.history_ids[-cap:]])
        q = net.forward(X, lengths, train_mode=False)[0]
        return select_action(q, cands.action_ids, 0.0, rng)

    steps = 0
    truncated = False
    per_episode: list[int] = []
    evaluated: list[str] = []
    for d in subset.dialogues:
        if steps + d.n_agent_turns > cfg.test_steps:
            truncated = True
            break
        rng_d = np.random.default_rng([seed, stable_hash(seed, d.id)])
        state = env.reset(env.corpus.get(d.id))
        ep: list[int] = []
        while not state.done:
            cands = env.make_candidates(state, rng_d)
            if policy is None:
                action = greedy(state, cands, env, rng_d)
            else:
                action = policy(state, cands, env)
            state, r, _ = env.step(state, action, cands)
            ep.append(r)
            steps += 1
        per_episode.append(episode_reward(ep))
        evaluated.append(d.id)
    if not per_episode:
        raise ValueError("evaluation budget too small for a single episode")
    return EvalResult(
        mean_reward=float(np.mean(per_episode)),
        episode_rewards=per_episode,
        dialogue_ids=evaluated,
        steps_used=steps,
        truncated=truncated,
    )
