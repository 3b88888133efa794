"""Acoustic front end: log-mel filterbanks, per-speaker normalization,
manifests, and the binary feature-file format.

Feature matrices are [T x dim] float arrays. Extraction from waveforms uses
a standard pipeline (pre-emphasis, Hamming window, power spectrum, triangular
mel filters, natural-log energies); precomputed matrices can also be loaded
from FEATv1 files so externally produced features are usable directly.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DimensionError, ManifestError

FEAT_MAGIC = b"FEATv1"
VARIANCE_FLOOR = 1e-10
ENERGY_FLOOR = 1e-10


@dataclass(frozen=True)
class FbankSpec:
    sample_rate: int = 16000
    num_mel: int = 40
    window_ms: float = 25.0
    hop_ms: float = 10.0
    preemphasis: float = 0.97
    fmin: float = 20.0
    fmax: float = 7800.0


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    features: np.ndarray  # [T x dim]
    transcript: str

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class SpeakerStats:
    speaker_id: str
    mean: np.ndarray
    var: np.ndarray
    frames: int


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(num_mel: int, nfft: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filters as a [num_mel x nfft//2+1] matrix."""
    points = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), num_mel + 2))
    bins = np.floor((nfft + 1) * points / sample_rate).astype(int)
    fb = np.zeros((num_mel, nfft // 2 + 1))
    for m in range(num_mel):
        lo, mid, hi = bins[m], bins[m + 1], bins[m + 2]
        for k in range(lo, mid):
            fb[m, k] = (k - lo) / max(mid - lo, 1)
        for k in range(mid, hi):
            fb[m, k] = (hi - k) / max(hi - mid, 1)
    return fb


def compute_fbank(samples, spec: FbankSpec = FbankSpec()) -> np.ndarray:
    """Log-mel filterbank energies for a mono waveform.

    Frames of window_ms every hop_ms; energies are floored at 1e-10 before
    the natural log, so an all-zero signal maps to log(1e-10) exactly.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a mono sample vector, got shape {x.shape}")
    win = int(round(spec.sample_rate * spec.window_ms / 1000.0))
    hop = int(round(spec.sample_rate * spec.hop_ms / 1000.0))
    if x.size < win:
        raise DimensionError(f"signal of {x.size} samples is shorter than one {win}-sample window")
    emph = np.empty_like(x)
    emph[0] = x[0]
    emph[1:] = x[1:] - spec.preemphasis * x[:-1]
    frames = np.lib.stride_tricks.sliding_window_view(emph, win)[::hop]
    frames = frames * np.hamming(win)
    nfft = 1 << (win - 1).bit_length()
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2
    fb = mel_filterbank(spec.num_mel, nfft, spec.sample_rate, spec.fmin, spec.fmax)
    energies = power @ fb.T
    return np.log(np.maximum(energies, ENERGY_FLOOR))


def accumulate_and_normalize(utterances: Iterable[Utterance]):
    """Per-speaker mean/variance normalization.

    Returns the utterances (original order, features replaced) plus a
    speaker_id -> SpeakerStats map. Statistics pool all frames of a speaker
    in utterance order; the variance floor keeps constant dimensions at zero
    after normalization.
    """
    utterances = list(utterances)
    by_speaker: dict[str, list[int]] = {}
    for i, utt in enumerate(utterances):
        by_speaker.setdefault(utt.speaker_id, []).append(i)
    stats = {}
    normalized: list[Utterance | None] = [None] * len(utterances)
    for speaker, indices in by_speaker.items():
        pooled = np.concatenate([utterances[i].features for i in indices], axis=0)
        mean = pooled.mean(axis=0)
        var = pooled.var(axis=0)
        stats[speaker] = SpeakerStats(speaker, mean, var, pooled.shape[0])
        denom = np.sqrt(var + VARIANCE_FLOOR)
        for i in indices:
            normalized[i] = replace(utterances[i], features=(utterances[i].features - mean) / denom)
    return normalized, stats


def write_feature_file(path, features: np.ndarray) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2:
        raise DimensionError(f"feature file expects a [T, dim] matrix, got shape {feats.shape}")
    with open(path, "wb") as fp:
        fp.write(FEAT_MAGIC)
        fp.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
        fp.write(feats.tobytes())


def read_feature_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = len(FEAT_MAGIC) + 8
    if len(raw) < header or raw[:len(FEAT_MAGIC)] != FEAT_MAGIC:
        raise ManifestError(f"{path}: not a FEATv1 file")
    t, dim = struct.unpack_from("<II", raw, len(FEAT_MAGIC))
    expected = header + 4 * t * dim
    if len(raw) != expected:
        raise ManifestError(f"{path}: expected {expected} bytes for {t}x{dim}, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", count=t * dim, offset=header).reshape(t, dim).copy()


def read_wav(path) -> tuple:
    """Mono 16-bit PCM samples in [-1, 1) plus the file's sample rate."""
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (OSError, wave.Error) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if channels != 1:
        raise ManifestError(f"{path}: expected mono audio, found {channels} channels")
    if width != 2:
        raise ManifestError(f"{path}: expected 16-bit PCM, found {8 * width}-bit")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, samples, sample_rate: int) -> None:
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(pcm.tobytes())


def load_manifest(path, spec: FbankSpec = FbankSpec()) -> list:
    """Read a TSV manifest into Utterances, in file order.

    Columns: utt_id, speaker_id, source_path, transcript. Lines starting
    with '#' are ignored. Source paths resolve relative to the manifest's
    directory; .wav sources run the filterbank pipeline, anything else is
    read as a FEATv1 feature file and must match spec.num_mel.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    utterances = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, found {len(fields)}")
        utt_id, speaker_id, source, transcript = fields
        source_path = Path(source)
        if not source_path.is_absolute():
            source_path = base / source_path
        if not source_path.exists():
            raise ManifestError(f"{path}:{lineno}: source file not found: {source_path}")
        if source_path.suffix.lower() == ".wav":
            samples, rate = read_wav(source_path)
            if rate != spec.sample_rate:
                raise ManifestError(
                    f"{path}:{lineno}: {source_path} is {rate} Hz, expected {spec.sample_rate}")
            feats = compute_fbank(samples, spec)
        else:
            feats = read_feature_file(source_path)
            if feats.shape[1] != spec.num_mel:
                raise ManifestError(
                    f"{path}:{lineno}: {source_path} has dimension {feats.shape[1]}, "
                    f"expected {spec.num_mel}")
        if feats.shape[0] < 1:
            raise ManifestError(f"{path}:{lineno}: empty feature matrix")
        utterances.append(Utterance(utt_id, speaker_id, feats.astype(np.float64), transcript))
    return utterances
