#!/usr/bin/python3
# SPDX-License-Identifier: copyleft-next-0.3.1

import io
import json
import os
import tempfile
import unittest
from unittest import mock

from navier.navier_bench import parse_args, run_args

"""
Unit tests for the navier-bench command line
"""

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tests")
SMALL = os.path.join(FIXTURES, "small.yaml")

KORN_ONLY = """\
domain:
  levels: [0]
discretization:
  degree: 1
  level: 0
experiments:
  enabled: [KORN]
  korn_levels: [0]
run:
  seed: 5
"""


class TestNavierBench(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def run_cmd(self, *argv):
        args = parse_args(["--config", SMALL, "--out", self.out] + list(argv))
        return run_args(args)

    def read(self, *parts):
        with open(os.path.join(self.out, *parts)) as f:
            return f.read()

    def test_0001_subcommand_is_required(self):
        with mock.patch("sys.stderr", new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                parse_args(["--seed", "1"])

    def test_0002_mesh_is_reproducible(self):
        self.assertEqual(self.run_cmd("mesh"), 0)
        first = self.read("mesh-d2-level1.txt")
        self.assertEqual(self.run_cmd("mesh"), 0)
        self.assertEqual(self.read("mesh-d2-level1.txt"), first)
        self.assertIn("seed=3", first.splitlines()[0])
        self.assertTrue(os.path.isfile(os.path.join(self.out, "mesh-d2-level0.txt")))

    def test_0003_zero_solve_has_zero_norms(self):
        self.assertEqual(self.run_cmd("solve", "--kind", "zero", "-T", "0.5"), 0)
        body = json.loads(self.read("solve", "zero-0-norms.json"))
        self.assertTrue(body["norms"])
        self.assertTrue(all(v == 0.0 for v in body["norms"].values()))
        self.assertEqual(body["meta"]["seed"], 3)
        for suffix in ("energy.csv", "final.txt", "traction.csv", "norms.csv"):
            self.assertTrue(os.path.isfile(os.path.join(self.out, "solve", "zero-0-" + suffix)))

    def test_0004_seed_override_reaches_outputs(self):
        self.assertEqual(self.run_cmd("--seed", "12", "mesh"), 0)
        self.assertIn("seed=12", self.read("mesh-d2-level0.txt").splitlines()[0])

    def test_0005_bad_config_exits_2(self):
        args = parse_args(["--config", os.path.join(FIXTURES, "bad-value.yaml"),
                           "--out", self.out, "mesh"])
        with self.assertLogs(level="ERROR"):
            self.assertEqual(run_args(args), 2)
        self.assertEqual(os.listdir(self.out), [])

    def test_0006_bundle_and_report(self):
        config = os.path.join(self.out, "korn.yaml")
        with open(config, "w") as f:
            f.write(KORN_ONLY)
        args = parse_args(["--config", config, "--out", self.out, "--serial", "identities"])
        self.assertEqual(run_args(args), 0)
        for name in ("bundle.json", "results.xml", "KORN.csv"):
            self.assertTrue(os.path.isfile(os.path.join(self.out, "identities", name)))
        self.assertFalse(os.path.exists(os.path.join(self.out, "identities", "errors.json")))
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = run_args(parse_args(["--config", config, "report", self.out]))
        self.assertEqual(code, 0)
        self.assertIn("| KORN | k1_positive | PASS |", stdout.getvalue())

    def test_0007_report_without_xml(self):
        config = os.path.join(self.out, "korn.yaml")
        with open(config, "w") as f:
            f.write(KORN_ONLY + "output:\n  formats: [json]\n")
        args = parse_args(["--config", config, "--out", self.out, "--serial", "identities"])
        self.assertEqual(run_args(args), 0)
        self.assertEqual(os.listdir(os.path.join(self.out, "identities")), ["bundle.json"])
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = run_args(parse_args(["report", os.path.join(self.out, "identities")]))
        self.assertEqual(code, 0)
        self.assertIn("| KORN | rigid_modes | PASS |", stdout.getvalue())

    def test_0008_missing_bundle_is_a_runtime_error(self):
        with self.assertLogs(level="ERROR"):
            self.assertEqual(self.run_cmd("report"), 1)
        body = json.loads(self.read("errors.json"))
        self.assertEqual(body["errors"][0]["error"], "FileNotFoundError")

    def test_0009_interp_bundle(self):
        code = self.run_cmd("--serial", "interp")
        self.assertIn(code, (0, 1))
        with open(os.path.join(self.out, "interp", "bundle.json")) as f:
            bundle = json.load(f)
        self.assertIn("AppB", bundle["experiments"])
        self.assertEqual(bundle["errors"], [])
        self.assertEqual(bundle["meta"]["seed"], 3)
        self.assertTrue(os.path.isfile(os.path.join(self.out, "interp", "results.xml")))


if __name__ == "__main__":
    unittest.main()
