"""Minimal RIFF/WAVE reader and writer.

Supports PCM 16-bit, PCM 32-bit and IEEE float 32-bit, any channel count,
including the WAVE_FORMAT_EXTENSIBLE wrapping of both codings.  Samples are
returned channels-first as float64 normalized to [-1, 1].  Malformed files
raise CorruptHeader with the byte offset of the problem; recognized-but-
unsupported codings raise UnsupportedFormat.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, UnsupportedFormat

_FORMAT_PCM = 0x0001
_FORMAT_IEEE_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


def read_wav(path: str | Path) -> tuple[np.ndarray, float]:
    """Read a WAV file; returns (samples (channels, frames) in [-1, 1], rate)."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise CorruptHeader(f"{path}: only {len(data)} bytes, RIFF header needs 12")
    if data[0:4] != b"RIFF":
        raise CorruptHeader(f"{path}: missing 'RIFF' tag at offset 0")
    if data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: missing 'WAVE' tag at offset 8")

    fmt = None
    payload = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if body_start + chunk_size > len(data):
            raise CorruptHeader(
                f"{path}: chunk {chunk_id!r} at offset {offset} declares "
                f"{chunk_size} bytes but the file ends at {len(data)}"
            )
        body = data[body_start : body_start + chunk_size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body, body_start, str(path))
        elif chunk_id == b"data":
            payload = body
        offset = body_start + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise CorruptHeader(f"{path}: no 'fmt ' chunk found (scanned to offset {offset})")
    if payload is None:
        raise CorruptHeader(f"{path}: no 'data' chunk found (scanned to offset {offset})")

    code, channels, rate, bits = fmt
    bytes_per_sample = bits // 8
    frame_bytes = bytes_per_sample * channels
    if frame_bytes == 0 or len(payload) % frame_bytes != 0:
        raise CorruptHeader(
            f"{path}: data chunk of {len(payload)} bytes is not a whole number "
            f"of {frame_bytes}-byte sample frames"
        )

    if code == _FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif code == _FORMAT_PCM and bits == 32:
        raw = np.frombuffer(payload, dtype="<i4").astype(np.float64) / 2147483648.0
    elif code == _FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(
            f"{path}: format code {code:#06x} with {bits}-bit samples is not "
            f"supported (PCM 16/32-bit or float 32-bit only)"
        )
    return raw.reshape(-1, channels).T.copy(), float(rate)


def _parse_fmt(body: bytes, body_start: int, path: str) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise CorruptHeader(
            f"{path}: 'fmt ' chunk at offset {body_start - 8} has {len(body)} "
            f"bytes, need at least 16"
        )
    code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body, 0)
    if code == _FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise CorruptHeader(
                f"{path}: extensible 'fmt ' chunk at offset {body_start - 8} "
                f"needs 40 bytes, has {len(body)}"
            )
        (code,) = struct.unpack_from("<H", body, 24)  # first 2 bytes of SubFormat GUID
    if channels == 0:
        raise CorruptHeader(f"{path}: 'fmt ' chunk declares 0 channels")
    return code, channels, rate, bits


def write_wav(
    path: str | Path,
    samples: np.ndarray,
    sample_rate: float,
    sample_format: str = "float32",
) -> None:
    """Write (channels, frames) float samples; clips to [-1, 1] for PCM."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    channels, _ = x.shape
    interleaved = x.T.reshape(-1)

    if sample_format == "pcm16":
        code, bits = _FORMAT_PCM, 16
        quantized = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = quantized.astype("<i2").tobytes()
    elif sample_format == "pcm32":
        code, bits = _FORMAT_PCM, 32
        quantized = np.clip(np.round(interleaved * 2147483648.0), -2147483648, 2147483647)
        payload = quantized.astype("<i4").tobytes()
    elif sample_format == "float32":
        code, bits = _FORMAT_IEEE_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    else:
        raise UnsupportedFormat(f"unknown sample_format {sample_format!r}")

    rate = int(round(sample_rate))
    block_align = channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", code, channels, rate, rate * block_align, block_align, bits
    )
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    with open(path, "wb") as handle:
        handle.write(b"RIFF" + struct.pack("<I", len(body)) + body)
