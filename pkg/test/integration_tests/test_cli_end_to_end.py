"""End to end runs of the installed command line tool."""
import json
import os
import subprocess
import sys
import tempfile
import unittest

from test.helper import TINY_CONFIG_YAML


class TestCliEndToEnd(unittest.TestCase):
    """Run ``python -m doalab`` in a subprocess."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.config = os.path.join(self.tmp.name, "tiny.yaml")
        with open(self.config, "w", encoding="utf-8") as stream:
            stream.write(TINY_CONFIG_YAML)

    def tearDown(self):
        self.tmp.cleanup()

    def _doalab(self, *argv, env=None):
        return subprocess.run(
            [sys.executable, "-m", "doalab"] + list(argv),
            capture_output=True,
            text=True,
            env=dict(os.environ, **(env or {})),
            check=False,
        )

    def test_version(self):
        """The module entry point prints its version."""
        result = self._doalab("--version")
        self.assertEqual(0, result.returncode)
        self.assertTrue(result.stdout.startswith("doalab "))

    def test_exit_codes(self):
        """Errors map to documented exit codes."""
        self.assertEqual(2, self._doalab("simulate", "--workers", "many").returncode)
        missing = self._doalab("evaluate", "--predictions", os.path.join(self.tmp.name, "none.jsonl"))
        self.assertEqual(4, missing.returncode)
        self.assertIn("none.jsonl", missing.stderr)

    def test_simulate_train_estimate(self):
        """A tiny experiment runs from simulation to the results table."""
        data = os.path.join(self.tmp.name, "data")
        env = {"DOALAB_DATA_DIR": data}
        self.assertEqual(0, self._doalab("simulate", "--config", self.config, "--workers", "2", env=env).returncode)
        models = os.path.join(self.tmp.name, "models")
        result = self._doalab("train", "--config", self.config, "--model", "map_split_c", "--pit", "on",
                              "--out", models, env=env)
        self.assertEqual(0, result.returncode, result.stderr)
        checkpoint = os.path.join(models, "map_split_c_g60_sce_pit.ckpt")
        predictions = os.path.join(self.tmp.name, "predictions.jsonl")
        result = self._doalab("estimate", "--checkpoint", checkpoint, "--out", predictions, env=env)
        self.assertEqual(0, result.returncode, result.stderr)
        with open(predictions, encoding="utf-8") as stream:
            lines = [json.loads(line) for line in stream]
        self.assertEqual(2, len(lines))
        self.assertTrue(all(line["pit"] for line in lines))
        result = self._doalab("evaluate", "--predictions", predictions, "--binned")
        self.assertEqual(0, result.returncode)
        self.assertIn("map_split_c_g60_sce_pit", result.stdout)
