import math

import numpy as np
import pytest

from tinyasr.errors import DimensionError, ManifestError
from tinyasr.features import (
    FbankSpec,
    Utterance,
    accumulate_and_normalize,
    compute_fbank,
    load_manifest,
    mel_filterbank,
    read_feature_file,
    write_feature_file,
    write_wav,
)


def test_frame_count_for_one_second():
    feats = compute_fbank(np.zeros(16000))
    assert feats.shape == (98, 40)  # floor((16000 - 400) / 160) + 1


def test_all_zero_signal_hits_floor_exactly():
    feats = compute_fbank(np.zeros(1000))
    assert (feats == math.log(1e-10)).all()


def test_too_short_signal_rejected():
    with pytest.raises(DimensionError):
        compute_fbank(np.zeros(399))


def test_pure_tone_has_stable_argmax_bin():
    t = np.arange(16000) / 16000.0
    feats = compute_fbank(np.sin(2 * np.pi * 1000.0 * t))
    bins = feats.argmax(axis=1)
    assert (bins == bins[0]).all()
    # the winning filter's center frequency should be near 1 kHz
    spec = FbankSpec()
    mel = 2595.0 * np.log10(1.0 + np.array([spec.fmin, spec.fmax]) / 700.0)
    centers = 700.0 * (10 ** (np.linspace(mel[0], mel[1], 42) / 2595.0) - 1.0)[1:-1]
    assert abs(centers[bins[0]] - 1000.0) < 150.0


def test_extraction_is_deterministic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=8000)
    a = compute_fbank(x)
    b = compute_fbank(x.copy())
    assert (a == b).all()


def test_mel_filterbank_shape_and_coverage():
    fb = mel_filterbank(40, 512, 16000, 20.0, 7800.0)
    assert fb.shape == (40, 257)
    assert (fb >= 0).all()
    assert (fb.sum(axis=1) > 0).all()  # no empty filters at these settings


def test_normalize_constant_column_is_zero():
    utt = Utterance("u1", "spk", np.full((5, 3), 7.0), "HI")
    normalized, stats = accumulate_and_normalize([utt])
    assert (normalized[0].features == 0.0).all()
    assert stats["spk"].frames == 5


def test_normalize_hand_case():
    utt = Utterance("u1", "spk", np.array([[1.0], [3.0]]), "HI")
    normalized, _ = accumulate_and_normalize([utt])
    np.testing.assert_allclose(normalized[0].features, [[-1.0], [1.0]], rtol=1e-8)


def test_normalize_moments_and_shape():
    rng = np.random.default_rng(1)
    utts = [
        Utterance(f"u{i}", "spk", rng.normal(3.0, 2.0, size=(50, 4)), "")
        for i in range(3)
    ]
    normalized, _ = accumulate_and_normalize(utts)
    pooled = np.concatenate([u.features for u in normalized])
    assert all(u.features.shape == orig.features.shape for u, orig in zip(normalized, utts))
    assert (np.abs(pooled.mean(axis=0)) <= 1e-6).all()
    np.testing.assert_allclose(pooled.var(axis=0), 1.0, atol=1e-4)


def test_speakers_normalized_independently():
    rng = np.random.default_rng(2)
    a = Utterance("a", "spk_a", rng.normal(size=(10, 2)), "")
    b = Utterance("b", "spk_b", rng.normal(size=(8, 2)), "")
    out_1, _ = accumulate_and_normalize([a, b])
    b_changed = Utterance("b", "spk_b", rng.normal(5, 3, size=(8, 2)), "")
    out_2, _ = accumulate_and_normalize([a, b_changed])
    assert (out_1[0].features == out_2[0].features).all()


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(7, 5)).astype(np.float32)
    path = tmp_path / "x.feat"
    write_feature_file(path, feats)
    back = read_feature_file(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, feats)


def test_feature_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.feat"
    path.write_bytes(b"NOTFEAT" + b"\x00" * 16)
    with pytest.raises(ManifestError):
        read_feature_file(path)


def write_manifest(path, rows):
    path.write_text("\n".join("\t".join(r) for r in rows) + "\n")


def test_load_manifest_empty(tmp_path):
    manifest = tmp_path / "m.tsv"
    manifest.write_text("# only a comment\n\n")
    assert load_manifest(manifest) == []


def test_load_manifest_three_rows_in_order(tmp_path):
    spec = FbankSpec(num_mel=4)
    rng = np.random.default_rng(4)
    rows = []
    for i in range(3):
        feat_path = tmp_path / f"u{i}.feat"
        write_feature_file(feat_path, rng.normal(size=(5 + i, 4)).astype(np.float32))
        rows.append((f"u{i}", f"spk{i % 2}", feat_path.name, f"WORD{i}"))
    manifest = tmp_path / "m.tsv"
    write_manifest(manifest, rows)
    utts = load_manifest(manifest, spec)
    assert [u.utt_id for u in utts] == ["u0", "u1", "u2"]
    assert [u.num_frames for u in utts] == [5, 6, 7]
    assert utts[2].transcript == "WORD2"


def test_load_manifest_wrong_dimension_names_row(tmp_path):
    feat_path = tmp_path / "u0.feat"
    write_feature_file(feat_path, np.zeros((4, 13), dtype=np.float32))
    manifest = tmp_path / "m.tsv"
    write_manifest(manifest, [("u0", "s", feat_path.name, "HI")])
    with pytest.raises(ManifestError, match=r"m\.tsv:1.*13"):
        load_manifest(manifest, FbankSpec(num_mel=40))


def test_load_manifest_malformed_row_has_line_number(tmp_path):
    manifest = tmp_path / "m.tsv"
    manifest.write_text("# header\nonly two\tfields\n")
    with pytest.raises(ManifestError, match=r"m\.tsv:2"):
        load_manifest(manifest)


def test_load_manifest_missing_source(tmp_path):
    manifest = tmp_path / "m.tsv"
    write_manifest(manifest, [("u0", "s", "nope.feat", "HI")])
    with pytest.raises(ManifestError, match="nope.feat"):
        load_manifest(manifest)


def test_load_manifest_reads_wav(tmp_path):
    t = np.arange(8000) / 16000.0
    wav_path = tmp_path / "u0.wav"
    write_wav(wav_path, 0.2 * np.sin(2 * np.pi * 440.0 * t), 16000)
    manifest = tmp_path / "m.tsv"
    write_manifest(manifest, [("u0", "s", "u0.wav", "TONE")])
    utts = load_manifest(manifest)
    assert utts[0].features.shape == (48, 40)
