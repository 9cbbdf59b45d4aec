"""Audio ingestion: WAV reading/writing, segmentation and the dataset manifest."""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigurationError, EmptyAudioError, FormatError, UnsupportedCodecError

DEFAULT_SAMPLE_RATE = 44100

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform with its sample rate and optional payload label (grams)."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    source_id: str = ""
    payload_label: Optional[float] = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise EmptyAudioError("audio clip has no samples")
        if not np.all(np.isfinite(samples)):
            raise FormatError("audio clip contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ConfigurationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples) -> "AudioClip":
        return replace(self, samples=samples)


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            # truncated final chunk: tolerated for data, which is commonly mis-sized
            if chunk_id != b"data":
                raise FormatError(f"chunk {chunk_id!r} truncated")
        yield chunk_id, body
        pos += 8 + size + (size & 1)


def _decode(body: bytes, fmt_tag: int, bits: int, channels: int, block_align: int) -> np.ndarray:
    if bits not in ((32,) if fmt_tag == WAVE_FORMAT_IEEE_FLOAT else (8, 16, 24, 32)):
        kind = "float" if fmt_tag == WAVE_FORMAT_IEEE_FLOAT else "PCM"
        raise UnsupportedCodecError(f"{bits}-bit {kind} WAV is not supported")
    width = bits // 8
    if width * channels != block_align:
        raise FormatError(f"inconsistent block alignment ({bits} bits, {channels} ch, align {block_align})")
    n_frames = len(body) // block_align
    body = body[: n_frames * block_align]
    if fmt_tag == WAVE_FORMAT_IEEE_FLOAT:
        x = np.frombuffer(body, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(x)):
            raise FormatError("float WAV contains non-finite samples")
        x = np.clip(x, -1.0, 1.0)
    elif bits == 8:
        x = (np.frombuffer(body, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 16:
        x = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
    elif bits == 24:
        raw = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    else:
        x = np.frombuffer(body, dtype="<i4").astype(np.float64) / float(1 << 31)
    return x.reshape(n_frames, channels)


def parse_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode an in-memory RIFF/WAVE byte string; channels are averaged to mono."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    fmt = None
    body = None
    for chunk_id, chunk in _chunks(data):
        if chunk_id == b"fmt ":
            if len(chunk) < 16:
                raise FormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", chunk, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(chunk) < 26:
                    raise FormatError("extensible fmt chunk too short")
                fmt = (struct.unpack_from("<H", chunk, 24)[0],) + fmt[1:]
        elif chunk_id == b"data" and body is None:
            body = chunk
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if body is None:
        raise FormatError("missing data chunk")
    fmt_tag, channels, rate, _byte_rate, block_align, bits = fmt
    if fmt_tag not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedCodecError(f"WAV format tag 0x{fmt_tag:04x} is not supported")
    if channels < 1 or rate < 1:
        raise FormatError(f"invalid header: {channels} channels at {rate} Hz")
    frames = _decode(body, fmt_tag, bits, channels, block_align)
    if frames.shape[0] == 0:
        raise EmptyAudioError(f"{source_id or 'WAV'}: data chunk is empty")
    return AudioClip(frames.mean(axis=1), rate, source_id)


def load_wav(path, payload_label: Optional[float] = None, source_id: Optional[str] = None) -> AudioClip:
    path = Path(path)
    clip = parse_wav(path.read_bytes(), source_id=source_id or path.name)
    if payload_label is not None:
        clip = replace(clip, payload_label=payload_label)
    return clip


def encode_wav(clip: AudioClip, bit_depth: int | str = 16) -> bytes:
    """Serialize a clip as mono WAV.  ``bit_depth`` is 8, 16, 24, 32 or ``"float"``."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if bit_depth == "float":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        bits = int(bit_depth)
        tag = WAVE_FORMAT_PCM
        if bits == 8:
            q = np.clip(np.round(x * 128.0), -128, 127) + 128
            payload = q.astype(np.uint8).tobytes()
        elif bits in (16, 24, 32):
            full = float(1 << (bits - 1))
            q = np.clip(np.round(x * full), -full, full - 1).astype(np.int64)
            if bits == 16:
                payload = q.astype("<i2").tobytes()
            elif bits == 32:
                payload = q.astype("<i4").tobytes()
            else:
                u = (q & 0xFFFFFF).astype(np.uint32)
                b = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1)
                payload = b.astype(np.uint8).tobytes()
        else:
            raise UnsupportedCodecError(f"cannot write {bits}-bit PCM")
    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate_hz, clip.sample_rate_hz * block_align, block_align, bits)
    pad = b"\x00" if len(payload) & 1 else b""
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload + pad
    return b"RIFF" + struct.pack("<I", len(body)) + body


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary sibling file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_wav(path, clip: AudioClip, bit_depth: int | str = 16) -> None:
    atomic_write_bytes(path, encode_wav(clip, bit_depth))


def segment(clip: AudioClip, window_s: float) -> list[AudioClip]:
    """Split into consecutive non-overlapping windows, dropping the trailing remainder."""
    win = int(round(window_s * clip.sample_rate_hz))
    if window_s <= 0 or win < 1:
        raise ConfigurationError(f"window of {window_s} s is shorter than one sample")
    count = len(clip) // win
    return [clip.with_samples(clip.samples[i * win : (i + 1) * win]) for i in range(count)]


def format_number(value: float) -> str:
    """Shortest round-trip text for a float; integral values lose the trailing ``.0``."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


# -- manifest -----------------------------------------------------------------

MANIFEST_HEADER = ["path", "weight_g", "duration_s"]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    weight_g: float
    duration_s: float


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)
    root: Optional[Path] = None

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.path in seen:
                raise FormatError(f"duplicate manifest path {e.path!r}")
            if e.weight_g < 0:
                raise FormatError(f"negative payload weight for {e.path!r}")
            seen.add(e.path)
        object.__setattr__(self, "entries", entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def load_clips(self) -> list[AudioClip]:
        return [load_wav(self.resolve(e), payload_label=e.weight_g, source_id=e.path) for e in self.entries]


def manifest_to_csv(entries: Iterable[ManifestEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar=None)
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        if "," in e.path or "\n" in e.path:
            raise FormatError(f"manifest paths may not contain commas or newlines: {e.path!r}")
        writer.writerow([e.path, format_number(e.weight_g), format_number(e.duration_s)])
    return buf.getvalue()


def write_manifest(path, manifest: DatasetManifest) -> None:
    atomic_write_text(path, manifest_to_csv(manifest.entries))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: manifest is not UTF-8") from exc
    rows = list(csv.reader(io.StringIO(text), quoting=csv.QUOTE_NONE))
    if not rows or [c.strip() for c in rows[0]] != MANIFEST_HEADER:
        raise FormatError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            entries.append(ManifestEntry(row[0], float(row[1]), float(row[2])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return DatasetManifest(tuple(entries), root=path.parent)
