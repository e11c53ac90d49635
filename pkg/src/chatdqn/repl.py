"""Interactive inspection of a trained policy.

The user plays the human side; each turn the tool draws a candidate set
from the corpus (one scripted sentence plus distractors), prints every
cluster's Q-value with the candidate clusters highlighted, announces the
greedy choice, and utters a candidate from the chosen cluster. There is no
ground truth for live input, so no reward is scored. The transcript is
JSONL, one object per turn.
"""

from __future__ import annotations

import json

import numpy as np

from .agent import select_action
from .clustering import ClusterModel, assign_many
from .corpus import Corpus
from .embeddings import WordEmbeddingTable, embed_history, embed_sentence, tokenize
from .neuralnet import QNetwork

__all__ = ["chat_repl"]

QUIT = ":quit"


def _format_q_line(q: np.ndarray, candidate_ids) -> str:
    cand = set(candidate_ids)
    return " ".join(
        f"{i}:{q[i]:+.3f}" + ("*" if i in cand else "") for i in range(len(q))
    )


def chat_repl(
    net: QNetwork,
    sentence_model: ClusterModel,
    table: WordEmbeddingTable,
    corpus: Corpus,
    transcript_path: str,
    input_fn=input,
    output_fn=print,
    rng: np.random.Generator | None = None,
    candidates: int = 3,
    history_len: int = 50,
) -> str:
    """Run the session until `:quit` (or EOF); returns the transcript path.

    input_fn/output_fn are injectable so the loop is scriptable in tests.
    Empty input just re-prompts; unknown words fall back to the zero-vector
    rule inside the embedding layer, so nothing the user types can fail.
    """
    if net.n_actions != sentence_model.k:
        raise ValueError(
            f"network has {net.n_actions} actions but cluster model has k={sentence_model.k}"
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    sentences = [t.text for d in corpus for t in d.turns]
    if len(sentences) < candidates:
        raise ValueError(f"corpus has {len(sentences)} sentences; need >= {candidates}")
    vectors = np.stack([embed_sentence(tokenize(s), table).values for s in sentences])
    actions = assign_many(sentence_model, vectors)

    history: list[str] = []
    turn = 0
    with open(transcript_path, "w", encoding="utf-8") as fh:

        def record(speaker: str, text: str, action_id=None):
            nonlocal turn
            fh.write(
                json.dumps(
                    {
                        "turn": turn,
                        "speaker": speaker,
                        "text": text,
                        "action_id": action_id,
                        "reward": None,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
            turn += 1

        output_fn(f"{len(corpus)} dialogues, k={sentence_model.k} clusters. "
                  f"Type a sentence ({QUIT} to exit).")
        while True:
            try:
                user = input_fn("you> ")
            except EOFError:
                break
            if user is None or user.strip() == QUIT:
                break
            if not user.strip():
                continue  # re-prompt, no state change
            history.append(user)
            record("env", user)

            picks = rng.choice(len(sentences), size=candidates, replace=False)
            cand_sent = [sentences[int(i)] for i in picks]
            cand_ids = [int(actions[int(i)]) for i in picks]
            state = embed_history(history, table, max_len=history_len)
            q = net.q_values(state, train_mode=False)
            output_fn("q: " + _format_q_line(q, cand_ids))
            for j, (s, a) in enumerate(zip(cand_sent, cand_ids)):
                tag = "scripted" if j == 0 else "distractor"
                output_fn(f"  [{a}] ({tag}) {s}")
            choice = select_action(q, cand_ids, 0.0, rng)
            pool = [s for s, a in zip(cand_sent, cand_ids) if a == choice]
            uttered = pool[0] if len(pool) == 1 else pool[int(rng.integers(len(pool)))]
            output_fn(f"agent[{choice}]> {uttered}")
            history.append(uttered)
            record("agent", uttered, action_id=choice)
        fh.flush()
    return transcript_path
