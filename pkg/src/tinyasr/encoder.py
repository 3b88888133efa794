"""Stacked bidirectional LSTM encoder with pyramidal frame subsampling.

Each layer runs a forward and a backward LSTM over its input sequence and
concatenates the two hidden-state tracks. Layers listed in the subsampling
schedule see their input decimated first (frames 0, factor, 2*factor, ...),
so the output length depends only on T and the schedule. An optional batch
normalization over the time axis follows each layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Tensor, ops

INIT_RANGE = 0.1


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 8
    cells_per_direction: int = 320
    subsample_layers: tuple | None = None  # 1-based layer indices; None means top two
    subsample_factor: int = 2
    batch_norm: bool = True

    def __post_init__(self):
        if self.num_layers < 1 or self.cells_per_direction < 1:
            raise ConfigError("encoder needs at least one layer and one cell")
        if self.subsample_factor < 1:
            raise ConfigError(f"subsample_factor must be >= 1, got {self.subsample_factor}")
        for layer in self.resolved_subsample_layers():
            if not 1 <= layer <= self.num_layers:
                raise ConfigError(f"subsample layer {layer} outside 1..{self.num_layers}")

    def resolved_subsample_layers(self) -> tuple:
        if self.subsample_layers is not None:
            return tuple(sorted(set(self.subsample_layers)))
        top_two = range(max(1, self.num_layers - 1), self.num_layers + 1)
        return tuple(top_two)

    @property
    def output_dim(self) -> int:
        return 2 * self.cells_per_direction

    def min_input_frames(self) -> int:
        return self.subsample_factor ** len(self.resolved_subsample_layers())

    def output_length(self, num_frames: int) -> int:
        length = num_frames
        for _ in self.resolved_subsample_layers():
            length = math.ceil(length / self.subsample_factor)
        return length


@dataclass
class LstmParams:
    w_x: Tensor  # [input_dim x 4h]
    w_h: Tensor  # [h x 4h]
    b: Tensor    # [4h]

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]


def init_lstm_params(rng, input_dim: int, hidden: int, dtype=np.float64) -> LstmParams:
    def draw(*shape):
        return Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, shape), requires_grad=True, dtype=dtype)

    return LstmParams(w_x=draw(input_dim, 4 * hidden), w_h=draw(hidden, 4 * hidden), b=draw(4 * hidden))


def lstm_step(x_t: Tensor, state, params: LstmParams):
    """One LSTM step: state is (h, c), both [1 x hidden]. Returns (h, c)."""
    h_prev, c_prev = state
    gates = ops.add(ops.linear(x_t, params.w_x, params.b), ops.matmul(h_prev, params.w_h))
    return ops.lstm_gates(gates, c_prev)


def lstm_sequence(seq: Tensor, params: LstmParams, reverse: bool = False) -> Tensor:
    """Run an LSTM over all frames, returning hidden states in input order.

    The input projection for the whole sequence is one matrix product; the
    recurrence then adds the hidden-state projection frame by frame.
    """
    num_frames = seq.shape[0]
    hidden = params.hidden
    x_gates = ops.linear(seq, params.w_x, params.b)
    zeros = np.zeros((1, hidden), dtype=seq.data.dtype)
    h = Tensor(zeros)
    c = Tensor(zeros)
    rows: list = [None] * num_frames
    order = range(num_frames - 1, -1, -1) if reverse else range(num_frames)
    for t in order:
        gates = ops.add(ops.slice_rows(x_gates, t, t + 1), ops.matmul(h, params.w_h))
        h, c = ops.lstm_gates(gates, c)
        rows[t] = h
    return ops.stack_rows(rows)


@dataclass
class BlstmLayer:
    forward: LstmParams
    backward: LstmParams
    bn_gamma: Tensor | None = None
    bn_beta: Tensor | None = None
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None


def blstm_layer(seq: Tensor, layer: BlstmLayer) -> Tensor:
    """Forward and backward passes over the sequence, concatenated columnwise."""
    fwd = lstm_sequence(seq, layer.forward)
    bwd = lstm_sequence(seq, layer.backward, reverse=True)
    return ops.concat_cols(fwd, bwd)


def subsample(seq: Tensor, factor: int) -> Tensor:
    """Keep frames at indices 0, factor, 2*factor, ..."""
    return ops.subsample_rows(seq, factor)


@dataclass
class EncoderOutput:
    h: Tensor                # [L x output_dim]
    frame_map: np.ndarray    # original frame index of each output row

    @property
    def length(self) -> int:
        return self.h.shape[0]


class Encoder:
    def __init__(self, config: EncoderConfig, input_dim: int, rng, dtype=np.float64):
        self.config = config
        self.input_dim = input_dim
        self.dtype = dtype
        self.layers: list[BlstmLayer] = []
        dim = input_dim
        hidden = config.cells_per_direction
        for _ in range(config.num_layers):
            layer = BlstmLayer(
                forward=init_lstm_params(rng, dim, hidden, dtype),
                backward=init_lstm_params(rng, dim, hidden, dtype),
            )
            if config.batch_norm:
                layer.bn_gamma = Tensor(np.ones(2 * hidden, dtype=dtype), requires_grad=True)
                layer.bn_beta = Tensor(np.zeros(2 * hidden, dtype=dtype), requires_grad=True)
                layer.bn_mean = np.zeros(2 * hidden, dtype=dtype)
                layer.bn_var = np.ones(2 * hidden, dtype=dtype)
            self.layers.append(layer)
            dim = 2 * hidden

    def parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers, start=1):
            for tag, params in (("fw", layer.forward), ("bw", layer.backward)):
                out[f"enc.l{i}.{tag}.w_x"] = params.w_x
                out[f"enc.l{i}.{tag}.w_h"] = params.w_h
                out[f"enc.l{i}.{tag}.b"] = params.b
            if layer.bn_gamma is not None:
                out[f"enc.l{i}.bn.gamma"] = layer.bn_gamma
                out[f"enc.l{i}.bn.beta"] = layer.bn_beta
        return out

    def buffers(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers, start=1):
            if layer.bn_mean is not None:
                out[f"enc.l{i}.bn.mean"] = layer.bn_mean
                out[f"enc.l{i}.bn.var"] = layer.bn_var
        return out

    def output_length(self, num_frames: int) -> int:
        return self.config.output_length(num_frames)

    def __call__(self, x: Tensor, training: bool = False) -> EncoderOutput:
        return encode(x, self, training=training)


def encode(x: Tensor, encoder: Encoder, training: bool = False) -> EncoderOutput:
    """Full encoder pass: subsampling schedule, BLSTM stack, optional batch norm."""
    config = encoder.config
    if x.ndim != 2 or x.shape[1] != encoder.input_dim:
        raise DimensionError(f"encoder expects [T, {encoder.input_dim}], got {x.shape}")
    min_frames = config.min_input_frames()
    if x.shape[0] < min_frames:
        raise DimensionError(
            f"input of {x.shape[0]} frames is too short for the subsampling schedule "
            f"(needs at least {min_frames})")
    schedule = set(config.resolved_subsample_layers())
    seq = x
    frame_map = np.arange(x.shape[0])
    for index, layer in enumerate(encoder.layers, start=1):
        if index in schedule:
            seq = subsample(seq, config.subsample_factor)
            frame_map = frame_map[::config.subsample_factor]
        seq = blstm_layer(seq, layer)
        if layer.bn_gamma is not None:
            seq = ops.batchnorm_time(seq, layer.bn_gamma, layer.bn_beta,
                                     layer.bn_mean, layer.bn_var, training)
    return EncoderOutput(h=seq, frame_map=frame_map)
