"""Tests for WAV input/output."""
import os
import tempfile
import unittest

import numpy as np
import soundfile as sf

from doalab.audio import atomic_write, content_key, read_wav, write_content_addressed, write_wav
from doalab.dsp import Waveform
from doalab.exceptions import AudioFormatException


class TestAudio(unittest.TestCase):
    """Tests for reading and writing recordings."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = self.tmp.name
        rng = np.random.default_rng(0)
        self.waveform = Waveform(0.1 * rng.standard_normal((3, 500)))

    def tearDown(self):
        self.tmp.cleanup()

    def test_float_round_trip(self):
        """32-bit float files keep every channel at single precision."""
        path = os.path.join(self.root, "x.wav")
        write_wav(path, self.waveform)
        restored = read_wav(path)
        self.assertEqual((3, 500), restored.samples.shape)
        np.testing.assert_allclose(restored.samples, self.waveform.samples.astype(np.float32))

    def test_pcm16(self):
        """16-bit files are read back within quantisation error."""
        path = os.path.join(self.root, "x16.wav")
        write_wav(path, self.waveform, subtype="PCM_16")
        np.testing.assert_allclose(read_wav(path).samples, self.waveform.samples, atol=1.0 / 2**15)

    def test_other_rate_rejected(self):
        """Resampling is out of scope, so other rates are an audio format error."""
        path = os.path.join(self.root, "x8k.wav")
        sf.write(path, np.zeros(800), 8000, subtype="PCM_16")
        with self.assertRaises(AudioFormatException):
            read_wav(path)

    def test_unsupported_subtype(self):
        """Only PCM_16 and FLOAT are accepted."""
        path = os.path.join(self.root, "x24.wav")
        sf.write(path, np.zeros(800), 16000, subtype="PCM_24")
        with self.assertRaises(AudioFormatException):
            read_wav(path)
        with self.assertRaises(AudioFormatException):
            write_wav(path, self.waveform, subtype="PCM_24")

    def test_not_audio(self):
        """Files that are not audio cannot be read."""
        path = os.path.join(self.root, "text.wav")
        with open(path, "w", encoding="utf-8") as stream:
            stream.write("not a wav file")
        with self.assertRaises(AudioFormatException):
            read_wav(path)

    def test_content_addressed(self):
        """Equal audio is stored once under a path derived from its content."""
        first = write_content_addressed(self.root, self.waveform)
        second = write_content_addressed(self.root, Waveform(self.waveform.samples.copy()))
        self.assertEqual(first, second)
        key = content_key(self.waveform)
        self.assertEqual("audio/{}/{}.wav".format(key[:2], key), first)
        self.assertTrue(os.path.exists(os.path.join(self.root, first)))
        self.assertNotEqual(key, content_key(Waveform(self.waveform.samples[:, :-1])))

    def test_atomic_write_failure(self):
        """A failed write leaves neither the target nor a temporary file behind."""
        path = os.path.join(self.root, "out.txt")
        with self.assertRaises(RuntimeError):
            with atomic_write(path) as stream:
                stream.write("partial")
                raise RuntimeError("interrupted")
        self.assertEqual([], os.listdir(self.root))
