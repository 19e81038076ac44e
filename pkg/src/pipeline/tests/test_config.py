import json
import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase

from config.constants import DEFAULT_SEED, DESK_FRAME_COUNT
from exceptions import ArtifactIOError, ConfigError
from pipeline.config import flatten_errors, load_pipeline_config, parse_pipeline_config


class ParseConfigTests(SimpleTestCase):
    def test_empty_document_gives_defaults(self):
        config = parse_pipeline_config({})
        self.assertEqual(config.seed, DEFAULT_SEED)
        self.assertEqual(config.data["frames"], DESK_FRAME_COUNT)
        self.assertEqual(config.eval["extractor"], "vae-pooled")
        self.assertIsNone(config.output_dir)

    def test_unknown_top_level_key(self):
        with self.assertRaisesMessage(ConfigError, "bogus: Unknown key."):
            parse_pipeline_config({"bogus": 1})

    def test_unknown_nested_key_names_its_path(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"vae": {"latent_channel": 4}})
        self.assertEqual(cm.exception.key_path, "vae.latent_channel")
        self.assertEqual(cm.exception.exit_code, 2)

    def test_field_error_path(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"vae": {"temporal_compression": 3}})
        self.assertEqual(cm.exception.key_path, "vae.temporal_compression")

    def test_clip_geometry_is_checked_across_sections(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"data": {"frames": 8}})
        self.assertEqual(cm.exception.key_path, "data.frames")

    def test_patch_must_tile_the_latent(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"data": {"size": [24, 24]}, "dit": {"patch_size": [1, 4, 4]}})
        self.assertEqual(cm.exception.key_path, "dit.patch_size")

    def test_split_fractions_are_validated(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"data": {"split_fractions": [0.5, 0.5, 0.5]}})
        self.assertEqual(cm.exception.key_path, "data.split_fractions")

    def test_unknown_lesion(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"data": {"lesions": ["drusen"]}})
        self.assertTrue(cm.exception.key_path.startswith("data.lesions"))

    def test_every_error_is_reported(self):
        with self.assertRaises(ConfigError) as cm:
            parse_pipeline_config({"train": {"batch_size": 0, "p_uncond": 2}})
        self.assertIn("train.p_uncond", str(cm.exception))
        self.assertIn("train.batch_size", str(cm.exception))

    def test_echo_round_trips(self):
        config = parse_pipeline_config({"seed": 3, "data": {"count": 10}})
        self.assertEqual(parse_pipeline_config(config.as_dict()), config)

    def test_derived_model_configs(self):
        config = parse_pipeline_config({"data": {"frames": 9, "size": [64, 64]}})
        dit = config.dit_config()
        self.assertEqual(dit.latent_extents, (5, 16, 16))
        self.assertEqual(dit.latent_channels, config.vae["latent_channels"])
        self.assertEqual(config.schedule().train_timesteps, config.diffusion["train_timesteps"])
        self.assertEqual(config.vae_config().spatial_compression, config.vae["spatial_compression"])

    def test_output_path_falls_back_to_settings(self):
        config = parse_pipeline_config({})
        self.assertEqual(config.output_path(), Path(settings.ANGIODIT_OUTPUT_DIR))
        self.assertEqual(config.output_path("/tmp/run"), Path("/tmp/run"))


class FlattenErrorsTests(SimpleTestCase):
    def test_nested_paths(self):
        pairs = flatten_errors({"data": {"size": {0: ["Too small."]}}, "non_field_errors": ["Bad."]})
        self.assertEqual(pairs, [("data.size.0", "Too small."), ("", "Bad.")])


class LoadConfigTests(SimpleTestCase):
    def test_presets_load(self):
        for name in ("desk.json", "acceptance.json", "full.json"):
            with self.subTest(preset=name):
                load_pipeline_config(settings.ANGIODIT_CONFIG_DIR / name)

    def test_acceptance_preset(self):
        config = load_pipeline_config(settings.ANGIODIT_CONFIG_DIR / "acceptance.json")
        self.assertEqual(config.data["count"], 512)
        self.assertEqual(config.data["lesions"], ["leakage", "non-perfusion"])
        self.assertTrue(config.data["balanced"])
        self.assertTrue(config.eval["gate"])

    def test_full_preset_geometry(self):
        config = load_pipeline_config(settings.ANGIODIT_CONFIG_DIR / "full.json")
        self.assertEqual(config.frame_shape, (21, 512, 512))

    def test_overrides_win(self):
        config = load_pipeline_config(settings.ANGIODIT_CONFIG_DIR / "desk.json", {"seed": 11, "output_dir": None})
        self.assertEqual(config.seed, 11)

    def test_missing_file(self):
        with self.assertRaises(ArtifactIOError):
            load_pipeline_config("/nonexistent/config.json")

    def test_malformed_json(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "config.json"
            path.write_text("{not json")
            with self.assertRaisesMessage(ConfigError, "is not valid JSON"):
                load_pipeline_config(path)

    def test_non_object_document(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "config.json"
            path.write_text(json.dumps([1, 2]))
            with self.assertRaises(ConfigError):
                load_pipeline_config(path)
