"""CTC loss via log-domain forward-backward over blank-expanded labels.

The target sequence y (unit ids, 1..K) is expanded to (blank, y_1, blank,
y_2, ..., blank); alpha/beta recursions run over that expanded sequence in
log space. A brute-force path enumeration (probability domain, test scale
only) serves as the independent oracle. Blank is label id 0 throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, UnalignableError
from .numerics import Tensor
from .numerics.ops import make_node
from .numerics.tensor import accumulate

BLANK_ID = 0
NEG_INF = -np.inf


def collapse_path(path) -> list:
    """Remove adjacent duplicates, then blanks."""
    out = []
    prev = None
    for label in path:
        if label != prev:
            out.append(label)
        prev = label
    return [label for label in out if label != BLANK_ID]


def expand_labels(y) -> np.ndarray:
    """Blank-interleaved target: blank at even positions, labels at odd."""
    y = np.asarray(y, dtype=np.int64)
    z = np.zeros(2 * y.size + 1, dtype=np.int64)
    z[1::2] = y
    return z


def min_alignment_length(y) -> int:
    """Shortest frame count that can realize y: one frame per label plus one
    separating blank per adjacent repeat."""
    y = list(y)
    repeats = sum(1 for a, b in zip(y, y[1:]) if a == b)
    return len(y) + repeats


def _validate_target(y, num_labels: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1:
        raise ContractError(f"target must be a flat id sequence, got shape {y.shape}")
    if y.size and ((y < 1).any() or (y >= num_labels).any()):
        raise ContractError(f"target ids must lie in 1..{num_labels - 1}")
    return y


def brute_force_ctc(q, y) -> float:
    """Log-likelihood by explicit enumeration of every frame-label path.

    Only usable at test scale; (K+1)^L paths are enumerated. Returns -inf
    when no path collapses to y.
    """
    q = np.asarray(q, dtype=np.float64)
    num_frames, num_labels = q.shape
    target = list(_validate_target(y, num_labels))
    total = 0.0
    for path in itertools.product(range(num_labels), repeat=num_frames):
        if collapse_path(path) == target:
            p = 1.0
            for frame, label in enumerate(path):
                p *= q[frame, label]
            total += p
    return math.log(total) if total > 0.0 else NEG_INF


@dataclass
class CtcLattice:
    log_alpha: np.ndarray  # [L x 2U+1]
    log_beta: np.ndarray   # [L x 2U+1]
    log_likelihood: float
    expanded: np.ndarray   # the blank-interleaved target

    def dump(self, fp) -> None:
        """Text dump: one line per (frame, expanded-position) pair."""
        fp.write("l\tu\tlog_alpha\tlog_beta\n")
        num_frames, width = self.log_alpha.shape
        for l in range(num_frames):
            for u in range(width):
                fp.write(f"{l}\t{u}\t{self.log_alpha[l, u]:.10g}\t{self.log_beta[l, u]:.10g}\n")


def _logaddexp3(a, b, c):
    return np.logaddexp(np.logaddexp(a, b), c)


def ctc_forward_backward(q, y) -> CtcLattice:
    """Alpha/beta recursions in the log domain.

    q holds per-frame label probabilities [L x K+1]; y is the target unit
    id sequence. Raises UnalignableError when L is shorter than the minimal
    alignment.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] < 1:
        raise DimensionError(f"q must be [L, K+1] with L >= 1, got {q.shape}")
    y = _validate_target(y, q.shape[1])
    num_frames = q.shape[0]
    min_len = min_alignment_length(y)
    if num_frames < min_len:
        raise UnalignableError(
            f"target of {y.size} labels needs at least {min_len} frames, got {num_frames}")
    z = expand_labels(y)
    width = z.size
    with np.errstate(divide="ignore"):
        lq = np.log(q)
    lqz = lq[:, z]  # [L x width]

    # position u may be entered from u-2 when it is a label differing from z[u-2]
    skip = np.zeros(width, dtype=bool)
    if width > 2:
        skip[2:] = (z[2:] != BLANK_ID) & (z[2:] != z[:-2])

    log_alpha = np.full((num_frames, width), NEG_INF)
    log_alpha[0, 0] = lqz[0, 0]
    if width > 1:
        log_alpha[0, 1] = lqz[0, 1]
    for frame in range(1, num_frames):
        prev = log_alpha[frame - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        jump = np.full(width, NEG_INF)
        if width > 2:
            jump[2:] = np.where(skip[2:], prev[:-2], NEG_INF)
        log_alpha[frame] = _logaddexp3(stay, step, jump) + lqz[frame]

    log_beta = np.full((num_frames, width), NEG_INF)
    log_beta[-1, -1] = lqz[-1, -1]
    if width > 1:
        log_beta[-1, -2] = lqz[-1, -2]
    for frame in range(num_frames - 2, -1, -1):
        nxt = log_beta[frame + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        jump = np.full(width, NEG_INF)
        if width > 2:
            jump[:-2] = np.where(skip[2:], nxt[2:], NEG_INF)
        log_beta[frame] = _logaddexp3(stay, step, jump) + lqz[frame]

    if width > 1:
        log_likelihood = float(np.logaddexp(log_alpha[-1, -1], log_alpha[-1, -2]))
    else:
        log_likelihood = float(log_alpha[-1, 0])
    return CtcLattice(log_alpha=log_alpha, log_beta=log_beta,
                      log_likelihood=log_likelihood, expanded=z)


def frame_posterior_log_likelihoods(lattice: CtcLattice, q) -> np.ndarray:
    """Per-frame totals of alpha*beta/q over expanded positions (log domain).

    Every entry equals the sequence log-likelihood; exposed for lattice
    consistency checks.
    """
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore"):
        lqz = np.log(q)[:, lattice.expanded]
    terms = np.where(
        (lattice.log_alpha > NEG_INF) & (lattice.log_beta > NEG_INF),
        lattice.log_alpha + lattice.log_beta - lqz,
        NEG_INF,
    )
    maxes = terms.max(axis=1, keepdims=True)
    safe = np.where(np.isfinite(maxes), maxes, 0.0)
    return (np.log(np.exp(terms - safe).sum(axis=1)) + safe[:, 0])


def ctc_loss_and_grad(logits, y):
    """Negative log-likelihood and its gradient w.r.t. the logits.

    q = softmax(logits) internally; the gradient uses the standard identity
    d(-ln p)/d logit[l, k] = q[l, k] - (sum over positions u with z_u = k of
    alpha beta / q) / p.
    """
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    q = exp / exp.sum(axis=1, keepdims=True)
    lattice = ctc_forward_backward(q, y)
    ll = lattice.log_likelihood
    with np.errstate(divide="ignore"):
        lqz = np.log(q)[:, lattice.expanded]
    occupancy = np.where(
        (lattice.log_alpha > NEG_INF) & (lattice.log_beta > NEG_INF),
        np.exp(lattice.log_alpha + lattice.log_beta - lqz - ll),
        0.0,
    )
    grad = q.copy()
    for u, label in enumerate(lattice.expanded):
        grad[:, label] -= occupancy[:, u]
    return -ll, grad


def ctc_loss(logits: Tensor, y) -> Tensor:
    """Tape-registered CTC loss on logit rows [L x K+1]."""
    loss_value, grad = ctc_loss_and_grad(logits.data, y)

    def bwd(gs, grads):
        accumulate(grads, logits, grad * gs[0])

    return make_node(np.asarray(loss_value), (logits,), bwd)
