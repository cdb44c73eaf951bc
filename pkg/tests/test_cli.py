"""
Tests for the command-line interface, in-process and as a subprocess.
"""

import importlib
import io
import json
import logging
import math
import subprocess
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pandas as pd

from rlnc_tdd.bulk_queue import SWEEP_COLUMNS, sweep
from rlnc_tdd.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNSTABLE, main, parse_int_range
from rlnc_tdd.config import load_default_params
from rlnc_tdd import logging_config
from rlnc_tdd.errors import ConfigError
from rlnc_tdd.rlnc_chain import optimize_policy
from rlnc_tdd.version import __version__

REPO_ROOT = Path(__file__).resolve().parent.parent


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def _run_json(*argv):
    code, out, err = _run(*argv, "--format", "json")
    return code, json.loads(out), err


class TestPolicyCommand(unittest.TestCase):

    def test_json_policy(self):
        code, doc, _ = _run_json("policy", "--M", "3")
        self.assertEqual(code, EXIT_OK)
        expected = optimize_policy(load_default_params(), 3)
        self.assertEqual(doc["policy"]["n_per_state"], list(expected.n_per_state))
        self.assertEqual(doc["batch_size"], 3)
        self.assertEqual(doc["manifest"]["command"], "policy")
        self.assertEqual(doc["manifest"]["version"], __version__)

    def test_lossless_config(self):
        config = str(REPO_ROOT / "configs" / "lossless_link.yaml")
        code, doc, _ = _run_json("policy", "--config", config)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(doc["policy"]["n_per_state"], [1, 2, 3])

    def test_table_output(self):
        code, out, _ = _run("policy", "--M", "2")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("N_i", out)
        self.assertIn("E[T_M] (s):", out)

    def test_energy_objective(self):
        code, doc, _ = _run_json("policy", "--M", "2", "--objective", "energy")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(doc["objective"], "energy")

    def test_missing_key_exits_with_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "link.conf"
            path.write_text("pe = 0.2\nrate_bps = 1.5e6\n", encoding="utf-8")
            code, _, err = _run("policy", "--M", "2", "--config", str(path))
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("payload_bits", err)
        self.assertIn("ConfigError", err)


class TestQueueCommand(unittest.TestCase):

    def test_single_packet_queue(self):
        code, doc, _ = _run_json("queue", "--lambda", "1", "--m", "1", "--K", "1", "--B", "30")
        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(doc["EQ"], 0.040737, delta=1e-5)
        self.assertEqual(doc["EZ"], 1.0)
        self.assertTrue(doc["stable"])
        self.assertEqual(len(doc["pi"]), 31)
        self.assertAlmostEqual(sum(doc["pi"]), 1.0, delta=1e-10)

    def test_nearly_empty_queue(self):
        code, doc, _ = _run_json("queue", "--lambda", "0.0001", "--m", "1", "--K", "1", "--B", "30")
        self.assertEqual(code, EXIT_OK)
        self.assertLess(doc["EQ"], 1e-3)

    def test_unstable_flag(self):
        argv = ("queue", "--lambda", "30", "--m", "1", "--K", "1", "--B", "30")
        code, doc, _ = _run_json(*argv)
        self.assertEqual(code, EXIT_OK)
        self.assertFalse(doc["stable"])
        code, _, err = _run(*argv, "--fail-unstable")
        self.assertEqual(code, EXIT_UNSTABLE)
        self.assertIn("Unstable", err)

    def test_missing_queue_values(self):
        code, _, err = _run("queue", "--lambda", "1")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("missing required value", err)

    def test_table_output_file_gets_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "queue.txt"
            code, _, _ = _run("queue", "--lambda", "1", "--m", "1", "--K", "1", "--out", str(out))
            self.assertEqual(code, EXIT_OK)
            self.assertEqual(sorted(p.name for p in Path(tmp).iterdir()),
                             ["queue.txt", "queue.txt.manifest.json"])
            self.assertIn("E[Q]:", out.read_text(encoding="utf-8"))
            manifest = json.loads((Path(tmp) / "queue.txt.manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["command"], "queue")
        self.assertIn(str(out.resolve()), manifest["outputs"])

    def test_json_error_payload(self):
        code, doc, _ = _run_json("queue", "--config", "/nonexistent/link.conf")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(doc["type"], "ConfigError")
        self.assertIn("not found", doc["error"])


class TestSweepCommand(unittest.TestCase):

    def test_csv_with_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "sweep.csv"
            code, _, _ = _run("sweep", "--lambdas", "1,10", "--m-range", "1-2", "--K-range", "1-2",
                              "--B", "10", "--format", "csv", "--out", str(out))
            self.assertEqual(code, EXIT_OK)
            header = out.read_text(encoding="utf-8").splitlines()[0]
            self.assertEqual(header.split(","), SWEEP_COLUMNS)
            manifest = json.loads((Path(tmp) / "sweep.csv.manifest.json").read_text(encoding="utf-8"))
            self.assertEqual(manifest["command"], "sweep")
            self.assertIn(str(out.resolve()), manifest["outputs"])
            frame = pd.read_csv(out)

        expected = sweep([1, 2], [1, 2], [1.0, 10.0], 10, load_default_params()).table
        self.assertEqual(len(frame), len(expected))
        for read, computed in zip(frame["EQ"], expected["EQ"]):
            self.assertTrue(math.isclose(read, computed, rel_tol=1e-11))

    def test_json_argmin_report(self):
        code, doc, _ = _run_json("sweep", "--lambdas", "1", "--m-range", "1-2", "--K-range", "1-3", "--B", "10")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(doc["rows"]), 5)
        self.assertIn("1.0", doc["argmin"])
        self.assertEqual(doc["errors"], {})
        self.assertIsNone(doc["run_id"])

    def test_empty_ranges(self):
        code, _, _ = _run("sweep", "--lambdas", "1", "--m-range", "3", "--K-range", "2", "--B", "10")
        self.assertEqual(code, EXIT_CONFIG)
        code, _, _ = _run("sweep", "--lambdas", "1", "--m-range", ",", "--B", "10")
        self.assertEqual(code, EXIT_CONFIG)
        for flag in ("--m-range", "--K-range", "--lambdas"):
            argv = {"--lambdas": "1", "--m-range": "1", "--K-range": "1"}
            argv[flag] = ""
            with self.subTest(flag=flag):
                code, _, err = _run("sweep", *[x for kv in argv.items() for x in kv], "--B", "10")
                self.assertEqual(code, EXIT_CONFIG)
                self.assertIn("empty", err)

    def test_parse_int_range(self):
        self.assertEqual(parse_int_range("1-3,5"), [1, 2, 3, 5])
        self.assertEqual(parse_int_range("4"), [4])
        with self.assertRaises(ConfigError):
            parse_int_range("a-b")


class TestOtherCommands(unittest.TestCase):

    def test_service_distribution(self):
        code, doc, _ = _run_json("service-dist", "--n", "1")
        self.assertEqual(code, EXIT_OK)
        first = doc["atoms"][0]
        self.assertAlmostEqual(first["t"], 0.0318, places=10)
        self.assertAlmostEqual(first["p"], 0.8, places=10)
        self.assertAlmostEqual(doc["mean_s"], 0.03975, places=10)

    def test_arrivals_at_zero_rate(self):
        code, doc, _ = _run_json("arrivals", "--j", "1", "--lambda", "0", "--kmax", "5")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(doc["a"]), 6)
        self.assertAlmostEqual(doc["a"][0], 1.0, delta=1e-9)
        self.assertEqual(doc["poisson_tail"], 0.0)

    def test_zero_kmax_is_rejected(self):
        code, _, err = _run("arrivals", "--j", "1", "--lambda", "1", "--kmax", "0")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn("kmax must be at least 1, got 0", err)

    def test_zero_batch_size_reports_the_value(self):
        for argv in (("policy", "--M", "0"), ("service-dist", "--n", "0")):
            with self.subTest(command=argv[0]):
                code, _, err = _run(*argv)
                self.assertEqual(code, EXIT_CONFIG)
                self.assertIn("got 0", err)

    def test_simulation_is_deterministic(self):
        argv = ("simulate", "--lambda", "10", "--m", "1", "--K", "2", "--B", "10",
                "--completions", "2000", "--seed", "5")
        first = _run_json(*argv)
        second = _run_json(*argv)
        self.assertEqual(first[0], EXIT_OK)
        self.assertEqual(json.dumps(first[1]["report"], sort_keys=True),
                         json.dumps(second[1]["report"], sort_keys=True))
        self.assertEqual(first[1]["report"]["seed"], 5)


class TestLoggingSetup(unittest.TestCase):

    def tearDown(self):
        logging_config.ensure_logging_setup(logging.WARNING)

    def test_import_keeps_root_handlers(self):
        root = logging.getLogger()
        handler = logging.NullHandler()
        root.addHandler(handler)
        try:
            importlib.reload(logging_config)
            self.assertIn(handler, root.handlers)
        finally:
            root.removeHandler(handler)

    def test_verbose_flag_configures_root_logger(self):
        code, _, _ = _run("policy", "--M", "1", "-v")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(logging.getLogger().level, logging.INFO)



class TestSubprocess(unittest.TestCase):

    def _invoke(self, *argv):
        return subprocess.run([sys.executable, "-m", "rlnc_tdd", *argv], cwd=REPO_ROOT,
                              capture_output=True, text=True, timeout=300)

    def test_version(self):
        proc = self._invoke("--version")
        self.assertEqual(proc.returncode, 0)
        self.assertIn(__version__, proc.stdout)

    def test_policy_csv_to_stdout(self):
        proc = self._invoke("policy", "--M", "2", "--format", "csv")
        self.assertEqual(proc.returncode, 0, proc.stderr)
        lines = proc.stdout.splitlines()
        self.assertEqual(lines[0], "i,N_i,T_round_s,E_T_s,E_energy")
        self.assertEqual(len(lines), 3)

    def test_bad_config_exit_code(self):
        proc = self._invoke("policy", "--config", "does-not-exist.conf")
        self.assertEqual(proc.returncode, 2)
        self.assertIn("ConfigError", proc.stderr)


if __name__ == "__main__":
    unittest.main()
