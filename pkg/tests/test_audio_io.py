import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dronepayload.audio_io import (
    AudioClip,
    DatasetManifest,
    ManifestEntry,
    encode_wav,
    load_wav,
    manifest_to_csv,
    parse_wav,
    read_manifest,
    segment,
    write_manifest,
    write_wav,
)
from dronepayload.errors import ConfigurationError, EmptyAudioError, FormatError, UnsupportedCodecError

from helpers import tone


def _riff(fmt_tag, channels, fs, bits, payload, extra_fmt=b""):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, fs, fs * block, block, bits) + extra_fmt
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_stereo_16bit_constant_downmix():
    frames = np.full((10, 2), 16384, dtype="<i2")
    clip = parse_wav(_riff(1, 2, 44100, 16, frames.tobytes()))
    assert clip.sample_rate_hz == 44100
    assert np.all(clip.samples == 0.5)


def test_stereo_downmix_is_channel_mean():
    frames = np.array([[16384, 0], [-32768, 0], [8192, 8192]], dtype="<i2")
    clip = parse_wav(_riff(1, 2, 8000, 16, frames.tobytes()))
    np.testing.assert_array_equal(clip.samples, [0.25, -0.5, 0.25])


def test_single_zero_sample():
    clip = parse_wav(_riff(1, 1, 44100, 16, b"\x00\x00"))
    assert len(clip) == 1 and clip.samples[0] == 0.0


@pytest.mark.parametrize("bits", [8, 16, 24, 32])
def test_sine_roundtrip_within_one_lsb(tmp_path, bits):
    clip = tone(1000.0, 0.1, amp=0.8)
    path = tmp_path / f"s{bits}.wav"
    write_wav(path, clip, bits)
    back = load_wav(path)
    lsb = 1.0 / (1 << (bits - 1))
    assert back.sample_rate_hz == clip.sample_rate_hz
    assert np.max(np.abs(back.samples - clip.samples)) <= lsb


def test_float_roundtrip_is_float32_exact(tmp_path):
    clip = tone(440.0, 0.05)
    write_wav(tmp_path / "f.wav", clip, "float")
    back = load_wav(tmp_path / "f.wav")
    np.testing.assert_array_equal(back.samples, clip.samples.astype(np.float32).astype(np.float64))


def test_24bit_negative_full_scale():
    payload = bytes([0x00, 0x00, 0x80, 0xFF, 0xFF, 0x7F])
    clip = parse_wav(_riff(1, 1, 44100, 24, payload))
    np.testing.assert_allclose(clip.samples, [-1.0, (2**23 - 1) / 2**23])


def test_8bit_unsigned_midpoint_is_zero():
    clip = parse_wav(_riff(1, 1, 8000, 8, bytes([128, 0, 255])))
    np.testing.assert_allclose(clip.samples, [0.0, -1.0, 127 / 128])


def test_extensible_pcm_header():
    guid = struct.pack("<H", 1) + b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    extra = struct.pack("<HHI", 22, 16, 3) + guid
    clip = parse_wav(_riff(0xFFFE, 1, 16000, 16, np.array([16384], "<i2").tobytes(), extra))
    assert clip.samples[0] == 0.5


def test_unknown_chunks_are_skipped():
    data = _riff(1, 1, 8000, 16, np.array([16384, -16384], "<i2").tobytes())
    junk = b"LIST" + struct.pack("<I", 3) + b"abc\x00"
    patched = data[:12] + junk + data[12:]
    patched = patched[:4] + struct.pack("<I", len(patched) - 8) + patched[8:]
    np.testing.assert_array_equal(parse_wav(patched).samples, [0.5, -0.5])


@pytest.mark.parametrize(
    "blob",
    [b"", b"RIFX" + b"\x00" * 40, b"RIFF\x00\x00\x00\x00WAVX", _riff(1, 1, 8000, 16, b"")[:20]],
)
def test_malformed_header(blob):
    with pytest.raises(FormatError):
        parse_wav(blob)


def test_unsupported_codec():
    with pytest.raises(UnsupportedCodecError):
        parse_wav(_riff(0x0055, 1, 44100, 16, b"\x00\x00"))
    with pytest.raises(UnsupportedCodecError):
        parse_wav(_riff(1, 1, 44100, 12, b"\x00\x00"))


def test_empty_data_chunk():
    with pytest.raises(EmptyAudioError):
        parse_wav(_riff(1, 1, 44100, 16, b""))


def test_load_is_deterministic(tmp_path):
    write_wav(tmp_path / "a.wav", tone(300.0, 0.05))
    a = load_wav(tmp_path / "a.wav")
    b = load_wav(tmp_path / "a.wav")
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.source_id == "a.wav"


def test_encode_is_byte_stable():
    clip = tone(300.0, 0.05)
    assert encode_wav(clip) == encode_wav(clip)


def test_clip_rejects_bad_values():
    with pytest.raises(EmptyAudioError):
        AudioClip(np.array([]))
    with pytest.raises(FormatError):
        AudioClip(np.array([0.0, np.nan]))
    with pytest.raises(ConfigurationError):
        AudioClip(np.zeros(3), 0)


def test_clip_samples_are_read_only():
    clip = AudioClip(np.zeros(4))
    with pytest.raises(ValueError):
        clip.samples[0] = 1.0


# -- segmentation ---------------------------------------------------------------


def test_segment_170s_at_2_5s_gives_68():
    clip = AudioClip(np.zeros(170 * 1000), 1000, payload_label=50.0)
    segs = segment(clip, 2.5)
    assert len(segs) == 68
    assert all(s.payload_label == 50.0 and s.sample_rate_hz == 1000 for s in segs)


def test_segment_exact_window_is_identity():
    clip = tone(200.0, 1.0)
    (only,) = segment(clip, 1.0)
    np.testing.assert_array_equal(only.samples, clip.samples)


def test_segment_drops_remainder():
    clip = AudioClip(np.zeros(int(1.7 * 44100)))
    assert len(segment(clip, 0.25)) == 6


def test_segment_longer_than_clip_is_empty():
    assert segment(AudioClip(np.zeros(100), 1000), 1.0) == []


def test_segment_below_one_sample():
    with pytest.raises(ConfigurationError):
        segment(AudioClip(np.zeros(10), 1000), 1e-4)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5000), win=st.integers(1, 700))
def test_segments_concatenate_to_prefix(n, win):
    x = np.arange(n, dtype=float) / n
    clip = AudioClip(x, 1000)
    segs = segment(clip, win / 1000)
    joined = np.concatenate([s.samples for s in segs]) if segs else np.zeros(0)
    assert len(segs) == n // win
    np.testing.assert_array_equal(joined, x[: len(segs) * win])


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=200),
    st.sampled_from([8, 16, 24, 32]),
)
def test_roundtrip_within_one_quantization_step(values, bits):
    clip = AudioClip(np.array(values), 8000)
    back = parse_wav(encode_wav(clip, bits))
    assert np.max(np.abs(back.samples - clip.samples)) <= 1.0 / (1 << (bits - 1))


# -- manifest -------------------------------------------------------------------


def test_manifest_roundtrip(tmp_path):
    entries = (ManifestEntry("a.wav", 0, 170), ManifestEntry("sub/b.wav", 50, 12.5))
    write_manifest(tmp_path / "m.csv", DatasetManifest(entries))
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == "path,weight_g,duration_s"
    back = read_manifest(tmp_path / "m.csv")
    assert back.entries == entries
    assert back.resolve(entries[1]) == tmp_path / "sub" / "b.wav"


def test_manifest_loads_labelled_clips(tmp_path):
    write_wav(tmp_path / "x.wav", tone(200.0, 0.1))
    write_manifest(tmp_path / "m.csv", DatasetManifest((ManifestEntry("x.wav", 150, 0.1),)))
    (clip,) = read_manifest(tmp_path / "m.csv").load_clips()
    assert clip.payload_label == 150 and clip.source_id == "x.wav"


def test_manifest_rejects_duplicates_and_negative_weight():
    with pytest.raises(FormatError):
        DatasetManifest((ManifestEntry("a.wav", 0, 1), ManifestEntry("a.wav", 50, 1)))
    with pytest.raises(FormatError):
        DatasetManifest((ManifestEntry("a.wav", -50, 1),))


def test_manifest_rejects_comma_paths():
    with pytest.raises(FormatError):
        manifest_to_csv([ManifestEntry("a,b.wav", 0, 1)])


@pytest.mark.parametrize(
    "text", ["", "file,weight,duration\n", "path,weight_g,duration_s\na.wav,0\n", "path,weight_g,duration_s\na.wav,x,1\n"]
)
def test_manifest_format_errors(tmp_path, text):
    (tmp_path / "m.csv").write_text(text)
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "m.csv")
