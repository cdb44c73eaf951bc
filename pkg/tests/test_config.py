"""
Tests for configuration loading, validation and command-line overrides.
"""

import tempfile
import unittest
from pathlib import Path

from rlnc_tdd.config import (
    build_config,
    load_config,
    load_default_config,
    load_default_params,
    parse_config_text,
    with_overrides,
)
from rlnc_tdd.errors import ConfigError

REPO_ROOT = Path(__file__).resolve().parent.parent

LINK_LINES = [
    "pe = 0.2",
    "rate_bps = 1.5e6",
    "payload_bits = 10000",
    "header_bits = 80",
    "coeff_bits = 20",
    "ack_bits = 100",
    "prop_delay_s = 0.0125",
]


class ConfigFileTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name: str, text: str) -> Path:
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path

    def assertConfigError(self, text: str, line: int, fragment: str, name: str = "link.conf"):
        path = self.write(name, text)
        with self.assertRaises(ConfigError) as ctx:
            load_config(path)
        self.assertEqual(ctx.exception.line, line)
        self.assertIn(fragment, str(ctx.exception))
        self.assertTrue(str(ctx.exception).startswith(str(path)))
        return ctx.exception


class TestTextConfig(ConfigFileTestCase):

    def test_minimal_link(self):
        cfg = load_config(self.write("link.conf", "\n".join(LINK_LINES) + "\n"))
        self.assertEqual(cfg.link.pe, 0.2)
        self.assertEqual(cfg.link.pe_ack, 0.2)
        self.assertEqual(cfg.link.payload_bits, 10000)
        self.assertIsInstance(cfg.link.payload_bits, int)
        self.assertEqual(cfg.link.tx_power, 1.0)
        self.assertIsNone(cfg.link.t_wait_s)
        self.assertIsNone(cfg.lambda_rate)
        self.assertEqual(cfg.pmf_tol, 1e-10)
        self.assertEqual(cfg.search_window, 50)

    def test_comments_and_queue_keys(self):
        text = "# link\n\n" + "\n".join(LINK_LINES) + "\npe_ack = 0.0  # ideal feedback\nlambda = 30\nK = 5\n"
        cfg = load_config(self.write("link.conf", text))
        self.assertEqual(cfg.link.pe_ack, 0.0)
        self.assertEqual(cfg.lambda_rate, 30.0)
        self.assertEqual(cfg.k_max, 5)

    def test_packaged_example(self):
        cfg = load_config(REPO_ROOT / "configs" / "high_latency_link.conf")
        self.assertEqual(cfg.link.pe_ack, 0.2)
        self.assertEqual((cfg.lambda_rate, cfg.m, cfg.k_max, cfg.capacity), (30.0, 1, 5, 30))

    def test_malformed_line(self):
        self.assertConfigError("pe = 0.2\nrate_bps 1.5e6\n", 2, "expected 'key = value'")

    def test_unknown_key(self):
        self.assertConfigError("\n".join(LINK_LINES + ["field_size = 256"]), 8, "unknown key 'field_size'")

    def test_duplicate_key(self):
        self.assertConfigError("\n".join(LINK_LINES + ["pe = 0.3"]), 8, "first set on line 1")

    def test_non_numeric_value(self):
        self.assertConfigError("pe = 0.2\nrate_bps = fast\n", 2, "must be numeric")

    def test_integer_key(self):
        self.assertConfigError("pe = 0.2\npayload_bits = 10.5\n", 2, "must be an integer")

    def test_missing_key_is_named(self):
        lines = [line for line in LINK_LINES if not line.startswith("ack_bits")]
        self.assertConfigError("\n".join(lines), 0, "missing required key 'ack_bits'")

    def test_invalid_probability_points_at_its_line(self):
        lines = list(LINK_LINES)
        lines[0] = "pe = 1.0"
        self.assertConfigError("\n".join(lines), 1, "pe must lie in [0, 1)")

    def test_invalid_analysis_value(self):
        self.assertConfigError("\n".join(LINK_LINES + ["batches = 5"]), 8, "'batches' must be at least 20")

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(self.tmp / "absent.conf")


class TestYamlConfig(ConfigFileTestCase):

    def test_lossless_example(self):
        cfg = load_config(REPO_ROOT / "configs" / "lossless_link.yaml")
        self.assertEqual(cfg.link.pe, 0.0)
        self.assertEqual((cfg.m, cfg.k_max, cfg.capacity), (1, 3, 10))

    def test_yaml_and_text_agree(self):
        text = load_config(self.write("link.conf", "\n".join(LINK_LINES)))
        yaml_text = "\n".join(line.replace(" = ", ": ") for line in LINK_LINES)
        from_yaml = load_config(self.write("link.yaml", yaml_text))
        self.assertEqual(text, from_yaml)

    def test_unknown_key_has_no_line(self):
        error = self.assertConfigError("pe: 0.2\ncolour: blue\n", 0, "unknown key 'colour'", name="link.yml")
        self.assertNotIn(":0:", str(error))

    def test_syntax_error_reports_line(self):
        path = self.write("link.yaml", "pe: 0.2\nrate_bps: [1\n")
        with self.assertRaises(ConfigError) as ctx:
            load_config(path)
        self.assertGreaterEqual(ctx.exception.line, 1)

    def test_not_a_mapping(self):
        self.assertConfigError("- 1\n- 2\n", 0, "mapping", name="link.yaml")


class TestDefaultsAndOverrides(unittest.TestCase):

    def test_default_params(self):
        link = load_default_params()
        self.assertEqual(link.pe, 0.2)
        self.assertEqual(link.pe_ack, 0.0)
        self.assertEqual(link.rate_bps, 1.5e6)
        self.assertEqual(link.prop_delay_s, 12.5e-3)
        self.assertEqual(load_default_config().capacity, 30)

    def test_overrides(self):
        cfg = with_overrides(load_default_config(), pe_ack=0.2, lambda_rate=10.0, m=None, k_max=3)
        self.assertEqual(cfg.link.pe_ack, 0.2)
        self.assertEqual(cfg.link.pe, 0.2)
        self.assertEqual(cfg.lambda_rate, 10.0)
        self.assertIsNone(cfg.m)
        self.assertEqual(cfg.k_max, 3)

    def test_invalid_overrides(self):
        with self.assertRaises(ConfigError):
            with_overrides(load_default_config(), pe_ack=1.5)
        with self.assertRaises(ConfigError):
            with_overrides(load_default_config(), batches=3)

    def test_build_from_values(self):
        values, lines = parse_config_text("\n".join(LINK_LINES + ["t_wait_s = 0.03"]))
        self.assertEqual(lines["t_wait_s"], 8)
        cfg = build_config(values, None, lines)
        self.assertEqual(cfg.link.t_wait_s, 0.03)


if __name__ == "__main__":
    unittest.main()
