"""Dialogue environment: the agent replays the second speaker of scripted
human-human dialogues, choosing among clustered candidate responses and
earning +1 when it picks the cluster of the true human reply, -1 otherwise.

All corpus sentences are embedded and cluster-assigned once at construction;
states carry global sentence ids so batches of training states can be
materialized with a single gather from the precomputed vector matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import clustering
from .clustering import ClusterModel
from .corpus import AGENT, Corpus, Dialogue
from .embeddings import WordEmbeddingTable, embed_sentence, tokenize

__all__ = [
    "EnvState",
    "CandidateSet",
    "DialogueEnv",
    "episode_reward",
    "baseline_bounds",
]


@dataclass(frozen=True, eq=False)
class EnvState:
    """Transcript so far plus the index of the next agent decision."""

    dialogue_ref: str
    history: tuple[str, ...]
    history_ids: tuple[int, ...]  # global sentence ids mirroring `history`
    turn_index: int
    done: bool


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """c candidate responses, exactly one of them the scripted human reply."""

    sentences: tuple[str, ...]
    truth_index: int
    action_ids: tuple[int, ...]
    sentence_ids: tuple[int, ...]  # global sentence ids


class DialogueEnv:
    """Environment over an immutable corpus, sentence-cluster model, and
    embedding table.

    The env owns a private rng used only to pick which same-cluster candidate
    is uttered after a wrong choice; candidate sampling takes the caller's
    rng so evaluation runs can be candidate-paired across policies.
    """

    def __init__(
        self,
        corpus: Corpus,
        sentence_model: ClusterModel,
        table: WordEmbeddingTable,
        candidates: int = 3,
        rng: np.random.Generator | None = None,
    ):
        if candidates < 1:
            raise ValueError(f"candidates must be >= 1, got {candidates}")
        if len(corpus) == 0:
            raise ValueError("empty corpus")
        if sentence_model.dim != table.dim:
            raise ValueError(
                f"cluster model dim {sentence_model.dim} != table dim {table.dim}"
            )
        self.corpus = corpus
        self.model = sentence_model
        self.table = table
        self.candidates = candidates
        self._rng = rng if rng is not None else np.random.default_rng(0)

        sentences: list[str] = []
        sent_dialogue: list[int] = []
        self.dialogue_sentence_ids: list[list[int]] = []
        for di, d in enumerate(corpus.dialogues):
            ids = []
            for t in d.turns:
                ids.append(len(sentences))
                sentences.append(t.text)
                sent_dialogue.append(di)
            self.dialogue_sentence_ids.append(ids)
        self.sentences = sentences
        self.sent_dialogue = np.asarray(sent_dialogue, dtype=np.int64)
        vectors = np.zeros((len(sentences), table.dim), dtype=np.float64)
        for i, text in enumerate(sentences):
            vectors[i] = embed_sentence(tokenize(text), table).values
        self.vectors = vectors
        # One extra zero row so padded id matrices can gather in one shot.
        self._vectors_ext = np.vstack([vectors, np.zeros((1, table.dim))])
        self.sent_action = clustering.assign_many(sentence_model, vectors)

    @property
    def n_actions(self) -> int:
        return self.model.k

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    def reset(self, dialogue: Dialogue) -> EnvState:
        """Start an episode: history holds the env's opening sentence and the
        next decision is the dialogue's first agent turn."""
        if dialogue.n_agent_turns == 0:
            raise ValueError(f"dialogue {dialogue.id!r} has no agent turn")
        di = self.corpus.index_of(dialogue.id)
        first = self.dialogue_sentence_ids[di][0]
        return EnvState(
            dialogue_ref=dialogue.id,
            history=(self.sentences[first],),
            history_ids=(first,),
            turn_index=1,
            done=False,
        )

    def make_candidates(self, state: EnvState, rng: np.random.Generator) -> CandidateSet:
        """True next agent sentence plus c-1 distractors from other dialogues,
        in shuffled order, with cluster ids attached."""
        if state.done:
            raise ValueError("episode is done; no candidates to generate")
        di = self.corpus.index_of(state.dialogue_ref)
        own = self.dialogue_sentence_ids[di]
        truth = own[state.turn_index]
        n_distract = self.candidates - 1
        available = self.n_sentences - len(own)
        if n_distract > available:
            raise ValueError(
                f"need {n_distract} distractors but only {available} sentences "
                f"outside dialogue {state.dialogue_ref!r}"
            )
        picked: list[int] = []
        seen = {truth}
        while len(picked) < n_distract:
            cand = int(rng.integers(self.n_sentences))
            if self.sent_dialogue[cand] == di or cand in seen:
                continue
            picked.append(cand)
            seen.add(cand)
        ids = np.array([truth] + picked, dtype=np.int64)
        order = rng.permutation(self.candidates)
        ids = ids[order]
        truth_index = int(np.flatnonzero(ids == truth)[0])
        return CandidateSet(
            sentences=tuple(self.sentences[i] for i in ids),
            truth_index=truth_index,
            action_ids=tuple(int(self.sent_action[i]) for i in ids),
            sentence_ids=tuple(int(i) for i in ids),
        )

    def step(self, state: EnvState, chosen: int, cands: CandidateSet):
        """Execute a clustered action.

        Reward is +1 iff `chosen` equals the truth sentence's cluster id.
        The uttered sentence is the truth on +1, otherwise a uniformly chosen
        candidate from the chosen cluster; the scripted env reply (when the
        dialogue has one) follows either way.
        """
        if state.done:
            raise ValueError("episode is done")
        if chosen not in cands.action_ids:
            raise ValueError(
                f"action {chosen} not among candidate clusters {cands.action_ids}"
            )
        truth_action = cands.action_ids[cands.truth_index]
        if chosen == truth_action:
            reward = 1
            uttered = cands.sentence_ids[cands.truth_index]
        else:
            reward = -1
            pool = [
                sid
                for sid, aid in zip(cands.sentence_ids, cands.action_ids)
                if aid == chosen
            ]
            uttered = pool[0] if len(pool) == 1 else pool[int(self._rng.integers(len(pool)))]
        di = self.corpus.index_of(state.dialogue_ref)
        d = self.corpus.dialogues[di]
        own = self.dialogue_sentence_ids[di]
        new_ids = list(state.history_ids) + [uttered]
        env_reply = state.turn_index + 1
        if env_reply < len(d.turns):
            new_ids.append(own[env_reply])
        next_turn = state.turn_index + 2
        done = next_turn >= len(d.turns)
        new_state = EnvState(
            dialogue_ref=state.dialogue_ref,
            history=tuple(self.sentences[i] for i in new_ids),
            history_ids=tuple(new_ids),
            turn_index=next_turn,
            done=done,
        )
        return new_state, reward, done

    def batch_states(self, id_tuples: Sequence[tuple[int, ...]]):
        """Materialize histories (as global-sentence-id tuples) into a padded
        (B, T, m) batch plus its lengths vector. T = longest history (>= 1)."""
        lengths = np.array([len(t) for t in id_tuples], dtype=np.int64)
        t_max = max(1, int(lengths.max()) if len(lengths) else 1)
        pad = self.n_sentences  # index of the all-zeros row
        idx = np.full((len(id_tuples), t_max), pad, dtype=np.int64)
        for i, ids in enumerate(id_tuples):
            if ids:
                idx[i, : len(ids)] = ids
        return self._vectors_ext[idx], lengths


def episode_reward(rewards: Iterable[int]) -> int:
    """Sum of the per-turn rewards of one episode."""
    return int(sum(rewards))


def baseline_bounds(dialogues: Iterable[Dialogue], candidates: int = 3):
    """(upper, lower, random_expectation) mean episode rewards.

    Upper/lower assume always/never choosing the truth cluster; the random
    expectation assumes exactly one of c candidates is correct with distinct
    clusters: per turn (1/c)(+1) + ((c-1)/c)(-1) = 2/c - 1.
    """
    counts = [d.n_agent_turns for d in dialogues]
    if not counts:
        raise ValueError("empty dialogue set")
    if candidates < 1:
        raise ValueError(f"candidates must be >= 1, got {candidates}")
    mean_agent = float(np.mean(counts))
    per_turn = 2.0 / candidates - 1.0
    return mean_agent, -mean_agent, mean_agent * per_turn
