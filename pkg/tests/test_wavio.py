import struct

import numpy as np
import pytest

from doakit.errors import CorruptHeader, UnsupportedFormat
from doakit.wavio import read_wav, write_wav


def raw_wav(path, fmt_code, channels, rate, bits, payload, fmt_extra=b""):
    fmt = struct.pack(
        "<HHIIHH",
        fmt_code,
        channels,
        rate,
        rate * channels * bits // 8,
        channels * bits // 8,
        bits,
    ) + fmt_extra
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


class TestRead:
    def test_full_scale_square_wave_pcm16(self, tmp_path):
        path = tmp_path / "sq.wav"
        payload = np.tile(np.array([32767, -32767], dtype="<i2"), 64).tobytes()
        raw_wav(path, 1, 2, 16000, 16, payload)
        data, rate = read_wav(path)
        assert rate == 16000.0
        assert data.shape == (2, 64)
        np.testing.assert_allclose(np.abs(data), 32767 / 32768)

    def test_truncated_data_chunk(self, tmp_path):
        path = tmp_path / "trunc.wav"
        payload = np.zeros(100, dtype="<i2").tobytes()
        raw_wav(path, 1, 1, 16000, 16, payload)
        blob = path.read_bytes()
        path.write_bytes(blob[:60])
        with pytest.raises(CorruptHeader) as err:
            read_wav(path)
        assert "data" in str(err.value) and "offset" in str(err.value)

    def test_file_shorter_than_header(self, tmp_path):
        path = tmp_path / "tiny.wav"
        path.write_bytes(b"RIFF")
        with pytest.raises(CorruptHeader):
            read_wav(path)

    def test_missing_riff_tag(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"JUNK" + b"\x00" * 40)
        with pytest.raises(CorruptHeader) as err:
            read_wav(path)
        assert "offset 0" in str(err.value)

    def test_missing_data_chunk(self, tmp_path):
        path = tmp_path / "nodata.wav"
        fmt = struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16)
        body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(CorruptHeader) as err:
            read_wav(path)
        assert "'data'" in str(err.value)

    def test_unsupported_24bit(self, tmp_path):
        path = tmp_path / "u24.wav"
        raw_wav(path, 1, 1, 16000, 24, b"\x00" * 6)
        with pytest.raises(UnsupportedFormat):
            read_wav(path)

    def test_extensible_float(self, tmp_path):
        path = tmp_path / "ext.wav"
        samples = np.array([0.5, -0.25, 0.125], dtype="<f4")
        guid = struct.pack("<H", 3) + b"\x00\x00" + b"\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
        extra = struct.pack("<H", 22) + struct.pack("<H", 32) + struct.pack("<I", 0x3) + guid[:16]
        raw_wav(path, 0xFFFE, 1, 48000, 32, samples.tobytes(), fmt_extra=extra)
        data, rate = read_wav(path)
        np.testing.assert_allclose(data[0], samples, rtol=1e-7)

    def test_partial_sample_frame(self, tmp_path):
        path = tmp_path / "odd.wav"
        raw_wav(path, 1, 2, 16000, 16, b"\x00" * 6)  # 6 bytes != k * 4
        with pytest.raises(CorruptHeader):
            read_wav(path)

    def test_skips_unknown_chunks(self, tmp_path):
        path = tmp_path / "extra.wav"
        fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
        payload = np.array([1000, -1000], dtype="<i2").tobytes()
        body = b"WAVE"
        body += b"LIST" + struct.pack("<I", 4) + b"info"
        body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
        body += b"data" + struct.pack("<I", len(payload)) + payload
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        data, rate = read_wav(path)
        assert rate == 8000.0
        np.testing.assert_allclose(data[0], [1000 / 32768, -1000 / 32768])


class TestRoundTrip:
    @pytest.mark.parametrize(
        "fmt,lsb",
        [("pcm16", 1 / 32768), ("pcm32", 1 / 2147483648), ("float32", 1e-6)],
    )
    def test_write_read(self, tmp_path, fmt, lsb):
        rng = np.random.default_rng(0)
        data = np.clip(0.4 * rng.standard_normal((3, 500)), -0.999, 0.999)
        path = tmp_path / f"{fmt}.wav"
        write_wav(path, data, 22050.0, fmt)
        back, rate = read_wav(path)
        assert rate == 22050.0
        assert back.shape == data.shape
        assert np.max(np.abs(back - data)) <= lsb

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            write_wav(tmp_path / "x.wav", np.zeros((1, 4)), 8000.0, "alaw")

    def test_odd_payload_padded(self, tmp_path):
        # 3 mono pcm16 samples -> 6 data bytes, even; use a float32 single
        # sample count that yields word alignment checks on read
        path = tmp_path / "p.wav"
        write_wav(path, np.zeros((1, 3)), 8000.0, "pcm16")
        read_wav(path)
