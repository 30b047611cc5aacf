"""Tests for run configuration parsing, validation and process settings."""

import os
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path
from unittest.mock import patch

import pytest

from alm_ssd.config import (
    AssetSpec,
    ConfigError,
    build_run_config,
    build_settings,
    describe_config,
    dump_run_config,
    load_env_file,
    load_environment,
    load_run_config,
    parse_run_config,
    shipped_config_names,
    shipped_config_path,
    stressed,
    validate_config,
    with_branching,
    with_parameter,
)

pytestmark = pytest.mark.unit


class TestShippedConfigs(unittest.TestCase):

    def test_all_shipped_configs_load(self):
        names = shipped_config_names()
        self.assertEqual(names, ["base_paper", "base_small", "stressed"])
        for name in names:
            cfg = load_run_config(name)
            self.assertEqual(cfg.name, name)
            self.assertEqual(validate_config(cfg), [])

    def test_base_small_layout(self):
        cfg = load_run_config("base_small")
        self.assertEqual(cfg.stages, (0.0, 1.0, 2.0, 3.0, 5.0))
        self.assertEqual(cfg.branching, (4, 4, 4, 4))
        self.assertEqual(cfg.asset_ids, ("govt_2y", "corp_ig", "eq_small"))
        self.assertEqual(cfg.small_cap_asset, "eq_small")
        self.assertEqual(cfg.asset_index("corp_ig"), 2)
        self.assertAlmostEqual(cfg.econ.factor_cov[0][1], -0.000063)
        self.assertEqual(cfg.econ.spread_scale, 100.0)

    def test_stressed_differs_only_in_liabilities(self):
        base = load_run_config("base_small")
        stress = load_run_config("stressed")
        self.assertEqual(stress.liabilities[0].mu_xi, 0.05)
        self.assertEqual(stress.liabilities[0].sigma_xi, 0.05)
        self.assertEqual(replace(stress, name=base.name, liabilities=base.liabilities), base)

    def test_base_paper_has_fourteen_assets(self):
        cfg = load_run_config("base_paper")
        self.assertEqual(len(cfg.assets), 14)
        self.assertEqual(cfg.first_flow_offset, 1)
        self.assertTrue(all(a.theta_max == 0.3 for a in cfg.assets))

    def test_unknown_name(self):
        with self.assertRaises(ConfigError):
            shipped_config_path("does_not_exist")


class TestRoundTrip(unittest.TestCase):

    def test_dump_then_parse_is_lossless(self):
        cfg = load_run_config("base_paper")
        again = parse_run_config(dump_run_config(cfg), name="base_paper")
        self.assertEqual(again, cfg)

    def test_path_loading(self):
        cfg = with_parameter(load_run_config("base_small"), "phi", 0.8)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "custom.cfg"
            path.write_text(dump_run_config(cfg), encoding="utf-8")
            loaded = load_run_config(str(path))
        self.assertEqual(loaded.phi, 0.8)


class TestValidation(unittest.TestCase):

    def test_collects_every_problem(self):
        cfg = replace(load_run_config("base_small"), alpha=1.5, q=-0.1, phi=-1.0, branching=(2,))
        problems = validate_config(cfg)
        self.assertGreaterEqual(len(problems), 4)
        with self.assertRaises(ConfigError) as ctx:
            build_run_config(cfg)
        self.assertEqual(ctx.exception.problems, problems)

    def test_stage_dates_on_whole_months(self):
        cfg = replace(load_run_config("base_small"), stages=(0.0, 1.0, 2.05, 3.0, 5.0))
        self.assertIn("stage dates must fall on whole months", validate_config(cfg))

    def test_corporate_needs_equity_small_cap(self):
        cfg = replace(load_run_config("base_small"), small_cap_asset="govt_2y")
        self.assertIn("model.small_cap_asset must be an equity asset", validate_config(cfg))

    def test_theta_bounds(self):
        base = load_run_config("base_small")
        assets = (AssetSpec("a", "treasury", duration=1.0, theta_min=0.7, theta_max=0.5),) + base.assets[1:]
        self.assertTrue(any("theta_min" in p for p in validate_config(replace(base, assets=assets))))

    def test_parse_reports_bad_numbers(self):
        text = dump_run_config(load_run_config("base_small")).replace("alpha = 0.5", "alpha = half")
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(text)
        self.assertIn("model.alpha must be a number", ctx.exception.problems)

    def test_parse_reports_bad_matrix(self):
        text = dump_run_config(load_run_config("base_small"))
        broken = "\n".join(
            "factor_cov = 1, 2" if line.startswith("factor_cov") else line for line in text.splitlines()
        )
        with self.assertRaises(ConfigError):
            parse_run_config(broken)


class TestOverrides(unittest.TestCase):

    def test_stressed_helper(self):
        cfg = stressed(load_run_config("base_small"))
        self.assertTrue(all(l.mu_xi == 0.05 and l.sigma_xi == 0.05 for l in cfg.liabilities))

    def test_with_parameter(self):
        cfg = load_run_config("base_small")
        self.assertEqual(with_parameter(cfg, "kappa", 0.0).kappa, 0.0)
        self.assertEqual(with_parameter(cfg, "stress", 1).liabilities[0].mu_xi, 0.05)
        self.assertEqual(with_parameter(cfg, "stress", 0), cfg)
        with self.assertRaises(ConfigError):
            with_parameter(cfg, "gamma", 1.0)
        with self.assertRaises(ConfigError):
            with_parameter(cfg, "alpha", 2.0)

    def test_with_branching(self):
        cfg = with_branching(load_run_config("base_small"), [2, 2, 2, 1])
        self.assertEqual(cfg.branching, (2, 2, 2, 1))
        with self.assertRaises(ConfigError):
            with_branching(cfg, [2, 2])

    def test_describe(self):
        info = describe_config(load_run_config("base_small"))
        self.assertEqual(info["name"], "base_small")
        self.assertEqual([a["id"] for a in info["assets"]], ["govt_2y", "corp_ig", "eq_small"])
        self.assertTrue(info["finite_m"])


class TestServiceSettings(unittest.TestCase):

    def test_env_file_does_not_override_existing(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "test.env"
            path.write_text("# comment\nexport ALM_THREADS=3\nALM_LOG_LEVEL='DEBUG'\n", encoding="utf-8")
            with patch.dict(os.environ, {"ALM_LOG_LEVEL": "WARNING"}, clear=False):
                os.environ.pop("ALM_THREADS", None)
                load_env_file(path)
                settings = build_settings()
                self.assertEqual(settings.threads, 3)
                self.assertEqual(settings.log_level, "WARNING")

    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=True):
            settings = build_settings()
        self.assertEqual(settings.log_level, "INFO")
        self.assertEqual(settings.threads, 1)
        self.assertEqual(settings.output_dir, Path("runs"))

    def test_missing_env_file_is_ignored(self):
        load_env_file(Path("/nonexistent/alm.env"))

    def test_environment_lookup_order(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            explicit = root / "explicit.env"
            explicit.write_text("ALM_THREADS=4\n", encoding="utf-8")
            (root / ".env").write_text("ALM_THREADS=6\n", encoding="utf-8")
            with patch.dict(os.environ, {}, clear=False), patch.object(Path, "cwd", return_value=root):
                os.environ.pop("ALM_THREADS", None)
                os.environ.pop("ALM_ENV_FILE", None)
                self.assertEqual(load_environment(str(explicit)), explicit.resolve())
                self.assertEqual(build_settings().threads, 4)

                os.environ.pop("ALM_THREADS")
                self.assertEqual(load_environment(), (root / ".env").resolve())
                self.assertEqual(build_settings().threads, 6)

                os.environ.pop("ALM_THREADS")
                os.environ["ALM_ENV_FILE"] = str(explicit)
                self.assertEqual(load_environment(), explicit.resolve())
                self.assertEqual(build_settings().threads, 4)

    def test_environment_without_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            with patch.dict(os.environ, {}, clear=False), patch.object(Path, "cwd", return_value=root), patch(
                "alm_ssd.config.DEFAULT_ENV_PATH", root / "missing.env"
            ):
                os.environ.pop("ALM_ENV_FILE", None)
                self.assertIsNone(load_environment())


if __name__ == "__main__":
    unittest.main()
