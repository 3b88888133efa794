"""Beam-search and greedy decoding over an attention decoder.

Decoding is step-synchronous: every live hypothesis is expanded over all
output labels, the top ``beam`` expansions by total log-probability survive,
and those ending in the end sentinel move to a completed pool. Scores are
raw summed log-probabilities; an optional length penalty (off by default)
adds penalty * len(tokens) at ranking time.

Any object with ``begin(h)``, ``initial_state(length)``, ``step(frames,
state) -> (state, logits)`` and an ``inventory`` can be decoded; the bundled
AttentionDecoder is one such object, which keeps rigged test models cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError
from .numerics import Tensor
from .tokenizer import UnitInventory, detokenize


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple          # emitted global label ids; eos terminal when finished
    score: float           # accumulated log-probability
    state: object          # decoder state snapshot
    finished: bool

    def __len__(self):
        return len(self.tokens)


def default_max_len(length: int) -> int:
    return 2 * length + 10


def _log_softmax(row: np.ndarray) -> np.ndarray:
    z = row - row.max()
    return z - np.log(np.exp(z).sum())


def _step_logprobs(decoder, frames, state):
    state, logits = decoder.step(frames, state)
    return state, _log_softmax(logits.data[0])


def _expansion_ids(inventory: UnitInventory):
    """Labels a hypothesis may emit: every unit plus eos, never sos."""
    ids = list(range(1, inventory.num_units + 1))
    ids.append(inventory.eos_id)
    return ids


def _as_tensor(h) -> Tensor:
    return h if isinstance(h, Tensor) else Tensor(h)


def beam_search(h, decoder, beam: int, max_len: int | None = None,
                length_penalty: float = 0.0) -> list:
    """Ranked completed hypotheses for one utterance.

    h is the encoder output [L x enc_dim] (Tensor or array). Stops when all
    live hypotheses have finished or max_len steps have run; if nothing
    finished by then, the unfinished survivors are returned (finished=False).
    Ties in score break lexicographically on token ids, so results are
    deterministic.
    """
    h = _as_tensor(h)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ContractError(f"beam_search needs a non-empty encoder output, got shape {h.shape}")
    if beam < 1:
        raise ContractError(f"beam must be >= 1, got {beam}")
    if max_len is None:
        max_len = default_max_len(h.shape[0])
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    inventory = decoder.inventory
    expansions = _expansion_ids(inventory)
    frames = decoder.begin(h)
    live = [Hypothesis(tokens=(), score=0.0, state=decoder.initial_state(h.shape[0]),
                       finished=False)]
    completed: list[Hypothesis] = []

    def rank_key(hyp: Hypothesis):
        return (-(hyp.score + length_penalty * len(hyp.tokens)), hyp.tokens)

    for _ in range(max_len):
        candidates = []
        for hyp in live:
            state, logprobs = _step_logprobs(decoder, frames, hyp.state)
            for label in expansions:
                candidates.append(Hypothesis(
                    tokens=hyp.tokens + (label,),
                    score=hyp.score + float(logprobs[inventory.att_index(label)]),
                    state=replace(state, y_prev=label),
                    finished=label == inventory.eos_id,
                ))
        candidates.sort(key=rank_key)
        live = []
        for hyp in candidates[:beam]:
            if hyp.finished:
                completed.append(hyp)
            else:
                live.append(hyp)
        if not live:
            break
    pool = completed if completed else live
    return sorted(pool, key=rank_key)


def greedy_decode(h, decoder, max_len: int | None = None) -> Hypothesis:
    """Argmax label each step until eos or max_len."""
    h = _as_tensor(h)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ContractError(f"greedy_decode needs a non-empty encoder output, got shape {h.shape}")
    if max_len is None:
        max_len = default_max_len(h.shape[0])
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    inventory = decoder.inventory
    expansions = _expansion_ids(inventory)
    frames = decoder.begin(h)
    state = decoder.initial_state(h.shape[0])
    tokens: tuple = ()
    score = 0.0
    finished = False
    for _ in range(max_len):
        state, logprobs = _step_logprobs(decoder, frames, state)
        best = max(expansions, key=lambda label: (logprobs[inventory.att_index(label)], -label))
        tokens += (best,)
        score += float(logprobs[inventory.att_index(best)])
        state = replace(state, y_prev=best)
        if best == inventory.eos_id:
            finished = True
            break
    return Hypothesis(tokens=tokens, score=score, state=state, finished=finished)


def score_tokens(h, decoder, tokens) -> float:
    """Teacher-forced rescoring: summed log-probability of the token sequence."""
    h = _as_tensor(h)
    inventory = decoder.inventory
    frames = decoder.begin(h)
    state = decoder.initial_state(h.shape[0])
    total = 0.0
    for label in tokens:
        state, logprobs = _step_logprobs(decoder, frames, state)
        total += float(logprobs[inventory.att_index(label)])
        state = replace(state, y_prev=label)
    return total


def hypothesis_to_words(hyp: Hypothesis, inventory: UnitInventory) -> str:
    """Map token ids to units, drop sentinels, and restore the word string."""
    units = []
    for label in hyp.tokens:
        if label in (inventory.sos_id, inventory.eos_id):
            continue
        units.append(inventory.unit_of(label))
    return detokenize(units).text
