# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from errornet.utils.config import (
    RunConfig,
    load_config_file,
    parse_overrides,
    resolve_config_value,
)
from errornet.utils.constants import OUTPUT_ROOT_ENV_VAR
from errornet.utils.errors import ConfigError


class TestRunConfigCreate(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        config = RunConfig()
        self.assertEqual(config.stage, "seg")
        self.assertEqual(config.resolution, 64)
        self.assertEqual(config.eval_domains[0], "chase-like")
        self.assertEqual(config.checkpoint_path, Path("runs") / "checkpoints")

    def test_yaml_file_and_overrides(self):
        path = self.dir / "run.yaml"
        path.write_text("epochs: 3\nlr: 0.01\neval_domains: [chase-like, hrf-like]\n")
        config = RunConfig.create(config_file=path, overrides={"epochs": "5", "seed": None})
        self.assertEqual(config.epochs, 5)
        self.assertEqual(config.lr, 0.01)
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.eval_domains, ["chase-like", "hrf-like"])

    def test_key_value_file(self):
        path = self.dir / "run.cfg"
        path.write_text("# comment\n\nuse_vae = no\nbench_seeds=4, 5\ncheckpoint_dir=\n")
        config = RunConfig.create(config_file=path)
        self.assertFalse(config.use_vae)
        self.assertEqual(config.bench_seeds, [4, 5])
        self.assertIsNone(config.checkpoint_dir)

    def test_unknown_keys_are_all_listed(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.create(overrides={"epoch": 3, "learning_rate": 1})
        self.assertIn("epoch, learning_rate", str(ctx.exception))

    def test_invalid_values(self):
        bad = [
            {"epochs": "three"},
            {"epochs": 0},
            {"lr": -1},
            {"stage": "finetune"},
            {"use_vae": "maybe"},
            {"err_depth": 5},
            {"batch_size": 2.5},
            {"dataset": "dir"},
        ]
        for overrides in bad:
            with self.subTest(overrides=overrides), self.assertRaises(ConfigError):
                RunConfig.create(overrides=overrides)

    def test_output_root_from_environment(self):
        with patch.dict(os.environ, {OUTPUT_ROOT_ENV_VAR: str(self.dir / "env")}):
            self.assertEqual(RunConfig.create().output_path, self.dir / "env")
            cli = RunConfig.create(overrides={"output_dir": str(self.dir / "cli")})
            self.assertEqual(cli.output_path, self.dir / "cli")

    def test_environment_beats_the_config_file_for_output_root(self):
        config_file = self.dir / "run.yaml"
        config_file.write_text(f"output_dir: {self.dir / 'file'}\nepochs: 2\n")
        with patch.dict(os.environ, {OUTPUT_ROOT_ENV_VAR: str(self.dir / "env")}):
            config = RunConfig.create(config_file=config_file)
            self.assertEqual(config.output_path, self.dir / "env")
            self.assertEqual(config.epochs, 2)
            cli = RunConfig.create(
                config_file=config_file, overrides={"output_dir": str(self.dir / "cli")}
            )
            self.assertEqual(cli.output_path, self.dir / "cli")
        with patch.dict(os.environ, {OUTPUT_ROOT_ENV_VAR: ""}):
            self.assertEqual(
                RunConfig.create(config_file=config_file).output_path, self.dir / "file"
            )

    def test_replace_validates(self):
        config = RunConfig()
        self.assertEqual(config.replace(stage="joint").stage, "joint")
        self.assertEqual(config.stage, "seg")
        with self.assertRaises(ConfigError):
            config.replace(patience=-1)

    def test_effective_config_echo(self):
        config = RunConfig.create(overrides={"output_dir": str(self.dir), "bench_seeds": "1,2"})
        path = config.write_effective()
        lines = path.read_text().splitlines()
        self.assertEqual(path, self.dir / "effective_config.txt")
        self.assertEqual(lines, sorted(lines))
        self.assertEqual(len(lines), len(RunConfig.keys()))
        self.assertIn("bench_seeds=1,2", lines)
        self.assertIn("use_vae=true", lines)
        self.assertIn("checkpoint_dir=", lines)

    def test_echo_reloads_to_the_same_config(self):
        config = RunConfig.create(overrides={"output_dir": str(self.dir), "epochs": 7})
        reloaded = RunConfig.create(config_file=config.write_effective())
        self.assertEqual(reloaded, config)

    def test_network_spec(self):
        spec = RunConfig(resolution=32, base_width=2, width_scale=0.5).network_spec
        self.assertEqual((spec.resolution, spec.base_width, spec.width_scale), (32, 2, 0.5))


class TestConfigFiles(unittest.TestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config_file("/nonexistent/run.yaml")
        self.assertIn("/nonexistent/run.yaml", str(ctx.exception))

    def test_yaml_must_be_a_mapping(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.yaml"
            path.write_text("- a\n- b\n")
            with self.assertRaises(ConfigError):
                load_config_file(path)
            path.write_text("")
            self.assertEqual(load_config_file(path), {})

    def test_line_without_equals_names_the_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.cfg"
            path.write_text("epochs=2\nbroken\n")
            with self.assertRaises(ConfigError) as ctx:
                load_config_file(path)
            self.assertIn(":2:", str(ctx.exception))

    def test_parse_overrides(self):
        self.assertEqual(parse_overrides(["a=1", " b = x=y "]), {"a": "1", "b": "x=y"})
        with self.assertRaises(ConfigError):
            parse_overrides(["novalue"])


class TestResolveConfigValue(unittest.TestCase):
    def test_priority(self):
        env_var = "ERRORNET_TEST_VALUE"
        with patch.dict(os.environ, {env_var: "env"}):
            self.assertEqual(
                resolve_config_value(cli_value="cli", config_value="cfg", env_var=env_var), "cli"
            )
            self.assertEqual(
                resolve_config_value(cli_value=None, config_value="cfg", env_var=env_var), "env"
            )
        self.assertEqual(resolve_config_value(cli_value=None, config_value="cfg"), "cfg")
        self.assertIsNone(resolve_config_value(cli_value=None, config_value=None))


if __name__ == "__main__":
    unittest.main()
