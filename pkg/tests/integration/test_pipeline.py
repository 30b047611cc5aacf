"""Integration tests for the generate, solve, verify and report chain."""

import json
import tempfile
import time
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from alm_ssd.config import ConfigError, ServiceSettings, build_run_config, load_run_config
from alm_ssd.pipeline import (
    COMMANDS,
    PipelineService,
    read_solution,
    run_pipeline,
    solution_config,
    sweep,
)
from alm_ssd.tree import read_tree
from tests.helpers import create_test_config

pytestmark = pytest.mark.integration


class TestRunPipeline(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name) / "run"

    def tearDown(self):
        self._tmp.cleanup()

    def test_full_chain_writes_every_artifact(self):
        cfg = create_test_config(phi=1.0)
        result = run_pipeline(cfg, self.out)
        self.assertTrue(result.success)
        self.assertTrue(result.verification["passed"])
        self.assertEqual(result.summary["status"], "optimal")
        for name in ("tree.txt", "config.cfg", "solution.json", "verification.json", "run.json", "econ_statistics.csv"):
            self.assertTrue((self.out / name).exists(), name)
        self.assertTrue((self.out / "report" / "cdf.csv").exists())

        solution = read_solution(self.out / "solution.json")
        self.assertIsNotNone(solution.baseline)
        self.assertEqual(solution.baseline.phi, 0.0)
        self.assertGreaterEqual(solution.objective, solution.baseline.objective - 1e-6)
        restored = solution_config(solution)
        self.assertEqual((restored.name, restored.phi, restored.branching), ("test", 1.0, (2, 2, 2)))
        self.assertEqual(solution.tree_path, str(self.out / "tree.txt"))

        run_record = json.loads((self.out / "run.json").read_text(encoding="utf-8"))
        self.assertTrue(run_record["success"])

    def test_stages_can_run_separately(self):
        cfg = create_test_config(phi=0.0)
        run_pipeline(cfg, self.out, commands=("generate",))
        tree = read_tree(self.out / "tree.txt")
        self.assertEqual(len(tree.topology), 15)
        result = run_pipeline(cfg, self.out, commands=("solve",), baseline=False)
        self.assertEqual(result.summary["status"], "optimal")
        result = run_pipeline(cfg, self.out, commands=("report",), report_format="json")
        self.assertIn("report", result.artifacts)

    def test_bad_inputs(self):
        with self.assertRaises(ConfigError):
            run_pipeline(replace(create_test_config(), alpha=2.0), self.out)
        with self.assertRaises(ValueError):
            run_pipeline(create_test_config(), self.out, commands=("simulate",))

    def test_sweep_is_a_pipeline_command(self):
        self.assertIn("sweep", COMMANDS)
        cfg = create_test_config(stages=(0.0, 1.0, 2.0), branching=(2, 2))
        result = run_pipeline(cfg, self.out, commands=("sweep",), sweep_parameter="phi", sweep_values=[0.0, 1.0])
        table = pd.read_csv(result.artifacts["sweep"])
        self.assertEqual(list(table["value"]), [0.0, 1.0])
        self.assertTrue((self.out / "sweep" / "phi_1" / "solution.json").exists())
        self.assertEqual(result.summary, {})
        with self.assertRaises(ValueError):
            run_pipeline(cfg, self.out, commands=("sweep",))

    def test_solution_without_config_needs_fallback(self):
        cfg = create_test_config(phi=0.0)
        run_pipeline(cfg, self.out, commands=("generate", "solve"), baseline=False)
        solution = read_solution(self.out / "solution.json")
        solution.config_text = None
        with self.assertRaises(ValueError):
            solution_config(solution)
        self.assertIs(solution_config(solution, cfg), cfg)


class TestService(unittest.TestCase):

    def test_service_keeps_latest_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            service = PipelineService(ServiceSettings(log_level="INFO", threads=1, output_dir=Path(tmp)))
            self.assertIsNone(service.last_result)
            result = service.run("base_small", seed=3, phi=0.0, branching=[2, 2, 1, 1])
            self.assertIs(service.last_result, result)
            self.assertTrue(result.output_dir.name.startswith("base_small-"))
            self.assertEqual(result.summary["status"], "optimal")


@pytest.mark.slow
class TestShippedSmallBook(unittest.TestCase):
    """The shipped base_small book end to end and its directional results."""

    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        cls.cfg = build_run_config(load_run_config("base_small"))
        started = time.perf_counter()
        cls.result = run_pipeline(cls.cfg, cls.root / "base")
        cls.elapsed = time.perf_counter() - started
        cls.solution = read_solution(cls.root / "base" / "solution.json")

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def test_end_to_end_within_a_minute(self):
        self.assertTrue(self.result.success)
        self.assertLess(self.elapsed, 60.0)
        report = self.root / "base" / "report"
        for name in ("summary", "stage_statistics", "duration_mismatch", "root_allocation", "cdf"):
            self.assertTrue((report / f"{name}.csv").exists(), name)
        self.assertTrue(self.result.verification["passed"])

    def test_decomposer_mechanics(self):
        self.assertEqual(self.solution.status, "optimal")
        self.assertLessEqual(self.solution.iterations, 15)
        self.assertEqual(self.solution.counts["feasibility_cuts"], 0)
        bounds = [entry["root_bound"] for entry in self.solution.log if np.isfinite(entry["root_bound"])]
        for before, after in zip(bounds, bounds[1:]):
            self.assertGreaterEqual(after, before - 1e-7 * max(1.0, abs(before)))

    def test_k0_and_active_nodes_grow_with_phi(self):
        table = sweep(self.cfg, "phi", [0.0, 0.8, 1.0, 1.1], self.root / "phi")
        self.assertTrue((table["status"] == "optimal").all())
        k0 = table["k0"].to_numpy()
        active = table["active_ssd_pct"].to_numpy()
        self.assertTrue(np.all(np.diff(k0) >= -1e-6 * np.maximum(1.0, k0[:-1])), k0)
        self.assertTrue(np.all(np.diff(active) >= 0.0), active)
        self.assertGreater(k0[-1], k0[0])
        self.assertEqual(active[0], 0.0)

    def test_stressed_liabilities_need_more_capital(self):
        stressed = build_run_config(load_run_config("stressed"))
        result = run_pipeline(stressed, self.root / "stressed", commands=("generate", "solve"), baseline=False)
        self.assertGreaterEqual(result.summary["k0"], self.solution.k0 - 1e-6)


@pytest.mark.slow
class TestSweep(unittest.TestCase):

    def test_objective_grows_with_dominance_weight(self):
        cfg = create_test_config(stages=(0.0, 1.0, 2.0), branching=(3, 3))
        with tempfile.TemporaryDirectory() as tmp:
            table = sweep(cfg, "phi", [0.0, 0.5, 1.0], Path(tmp))
            self.assertTrue((Path(tmp) / "sweep.csv").exists())
            self.assertTrue((Path(tmp) / "phi_0p5" / "solution.json").exists())
        self.assertEqual(list(table["value"]), [0.0, 0.5, 1.0])
        self.assertTrue((table["status"] == "optimal").all())
        objectives = table["objective"].to_numpy()
        self.assertTrue(np.all(np.diff(objectives) >= -1e-6 * np.maximum(1.0, np.abs(objectives[:-1]))))


if __name__ == "__main__":
    unittest.main()
