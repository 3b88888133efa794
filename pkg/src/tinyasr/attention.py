"""Location-aware attention decoder.

Each step convolves the previous attention weights into location features,
scores every encoder frame through a shared tanh layer, forms the context
vector as the attention-weighted frame sum, then advances a unidirectional
LSTM whose input is the embedded previous label concatenated with the
context. The output layer reads the new LSTM state concatenated with the
context and covers the subword units plus the start/end sentinels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoder import LstmParams, init_lstm_params
from .errors import ContractError, DimensionError
from .numerics import Tensor, ops
from .tokenizer import UnitInventory

INIT_RANGE = 0.1


@dataclass(frozen=True)
class AttentionConfig:
    hidden: int = 320       # decoder LSTM cells
    embed_dim: int = 320    # previous-label embedding width
    att_dim: int = 320      # energy layer width
    conv_filters: int = 10
    conv_width: int = 100


@dataclass
class AttentionParams:
    omega: Tensor    # [att_dim x 1]
    w_state: Tensor  # [hidden x att_dim]
    v_enc: Tensor    # [enc_dim x att_dim]
    m_conv: Tensor   # [conv_filters x att_dim]
    b: Tensor        # [att_dim]
    filters: Tensor  # [conv_filters x conv_width]


@dataclass
class DecoderState:
    h: Tensor            # [1 x hidden]
    c: Tensor            # [1 x hidden]
    att_weights: Tensor  # [1 x L], non-negative, sums to 1
    y_prev: int          # global label id of the previously emitted symbol


@dataclass
class AttendedFrames:
    """Encoder output plus its precomputed energy projection."""

    h: Tensor        # [L x enc_dim]
    v_proj: Tensor   # [L x att_dim]

    @property
    def length(self) -> int:
        return self.h.shape[0]


def location_attention(state: DecoderState, h: Tensor, params: AttentionParams,
                       v_proj: Tensor | None = None):
    """Context vector and fresh attention weights for one decoder step.

    Location features come from convolving the previous step's weights with
    the trainable filters; energies add the projected decoder state, encoder
    frames, and location features under a shared tanh, then reduce through
    omega. Returns (context [1 x enc_dim], weights [1 x L]).
    """
    length = h.shape[0]
    if state.att_weights.shape != (1, length):
        raise ContractError(
            f"attention weights cover {state.att_weights.shape[1]} frames, encoder has {length}")
    loc = ops.conv1d_frames(ops.reshape(state.att_weights, (length,)), params.filters)
    state_proj = ops.linear(state.h, params.w_state, params.b)  # [1 x att_dim], bias folded in
    if v_proj is None:
        v_proj = ops.matmul(h, params.v_enc)
    pre = ops.add(ops.add(v_proj, ops.matmul(loc, params.m_conv)), state_proj)
    energies = ops.matmul(ops.elementwise(pre, "tanh"), params.omega)  # [L x 1]
    weights = ops.softmax(ops.transpose(energies))                     # [1 x L]
    context = ops.matmul(weights, h)                                   # [1 x enc_dim]
    return context, weights


class AttentionDecoder:
    def __init__(self, config: AttentionConfig, enc_dim: int, inventory: UnitInventory,
                 rng, dtype=np.float64):
        self.config = config
        self.enc_dim = enc_dim
        self.inventory = inventory
        self.dtype = dtype

        def draw(*shape):
            return Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, shape), requires_grad=True, dtype=dtype)

        self.att = AttentionParams(
            omega=draw(config.att_dim, 1),
            w_state=draw(config.hidden, config.att_dim),
            v_enc=draw(enc_dim, config.att_dim),
            m_conv=draw(config.conv_filters, config.att_dim),
            b=draw(config.att_dim),
            filters=draw(config.conv_filters, config.conv_width),
        )
        self.embedding = draw(inventory.num_att_labels, config.embed_dim)
        self.lstm = init_lstm_params(rng, config.embed_dim + enc_dim, config.hidden, dtype)
        self.w_out = draw(config.hidden + enc_dim, inventory.num_att_labels)
        self.b_out = draw(inventory.num_att_labels)

    def parameters(self) -> dict:
        return {
            "dec.att.omega": self.att.omega,
            "dec.att.w_state": self.att.w_state,
            "dec.att.v_enc": self.att.v_enc,
            "dec.att.m_conv": self.att.m_conv,
            "dec.att.b": self.att.b,
            "dec.att.filters": self.att.filters,
            "dec.embedding": self.embedding,
            "dec.lstm.w_x": self.lstm.w_x,
            "dec.lstm.w_h": self.lstm.w_h,
            "dec.lstm.b": self.lstm.b,
            "dec.out.w": self.w_out,
            "dec.out.b": self.b_out,
        }

    def begin(self, h: Tensor) -> AttendedFrames:
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] != self.enc_dim:
            raise DimensionError(f"decoder expects encoder output [L, {self.enc_dim}], got {h.shape}")
        return AttendedFrames(h=h, v_proj=ops.matmul(h, self.att.v_enc))

    def initial_state(self, length: int) -> DecoderState:
        zeros = np.zeros((1, self.config.hidden), dtype=self.dtype)
        uniform = np.full((1, length), 1.0 / length, dtype=self.dtype)
        return DecoderState(h=Tensor(zeros), c=Tensor(zeros),
                            att_weights=Tensor(uniform), y_prev=self.inventory.sos_id)

    def step(self, frames: AttendedFrames, state: DecoderState):
        """One attend-then-advance step; returns (new state, logits [1 x K+2]).

        The new state's y_prev is left equal to the old one; the caller fixes
        it once a label has been chosen (or supplied, under teacher forcing).
        """
        context, weights = location_attention(state, frames.h, self.att, frames.v_proj)
        new_state, logits = decoder_step(state, context, self)
        return replace(new_state, att_weights=weights), logits


def decoder_step(state: DecoderState, context: Tensor, decoder: AttentionDecoder):
    """Advance the decoder LSTM and score the next label.

    The LSTM consumes the embedded previous label concatenated with the
    context vector; the output layer consumes the new state concatenated
    with the same context.
    """
    embedded = ops.embed(decoder.embedding, decoder.inventory.att_index(state.y_prev))
    lstm_in = ops.concat_cols(embedded, context)
    gates = ops.add(ops.linear(lstm_in, decoder.lstm.w_x, decoder.lstm.b),
                    ops.matmul(state.h, decoder.lstm.w_h))
    h, c = ops.lstm_gates(gates, state.c)
    logits = ops.linear(ops.concat_cols(h, context), decoder.w_out, decoder.b_out)
    return DecoderState(h=h, c=c, att_weights=state.att_weights, y_prev=state.y_prev), logits


def sequence_nll(step_logits: list, target_indices: list) -> Tensor:
    """Sum of per-step negative log-probabilities of the target indices."""
    return ops.cross_entropy_sum(ops.stack_rows(step_logits), target_indices)


def _check_targets(targets, inventory: UnitInventory) -> list:
    targets = [int(t) for t in targets]
    if not targets:
        raise ContractError("attention loss needs at least one target label")
    for t in targets:
        if not 1 <= t <= inventory.num_units:
            raise ContractError(f"target id {t} is not a subword unit (sos/eos are implicit)")
    return targets


def attention_nll(h: Tensor, targets, decoder: AttentionDecoder,
                  collect_weights: list | None = None) -> Tensor:
    """Teacher-forced negative log-likelihood of targets followed by eos.

    The gold previous label feeds each step (starting from sos); the end
    sentinel is appended to the scored sequence. ``collect_weights`` can
    receive the per-step attention rows for diagnostics.
    """
    inventory = decoder.inventory
    targets = _check_targets(targets, inventory)
    frames = decoder.begin(h)
    state = decoder.initial_state(frames.length)
    teacher = targets + [inventory.eos_id]
    step_logits = []
    for gold in teacher:
        state, logits = decoder.step(frames, state)
        step_logits.append(logits)
        if collect_weights is not None:
            collect_weights.append(state.att_weights.data[0].copy())
        state = replace(state, y_prev=gold)
    return sequence_nll(step_logits, [inventory.att_index(t) for t in teacher])


def attention_matrix(h: Tensor, targets, decoder: AttentionDecoder) -> np.ndarray:
    """Teacher-forced attention weights as a [U+1 x L] matrix."""
    rows: list = []
    attention_nll(h, targets, decoder, collect_weights=rows)
    return np.stack(rows)


def dump_attention(matrix: np.ndarray, fp) -> None:
    for row in matrix:
        fp.write(" ".join(f"{w:.8f}" for w in row) + "\n")
