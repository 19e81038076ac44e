import io
import json
import tempfile
from pathlib import Path

from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, tag

from pipeline.formats import read_tvid

TINY_CONFIG = {
    "seed": 5,
    "data": {
        "count": 16,
        "frames": 5,
        "size": [16, 16],
        "raw_frames": [3, 6],
        "lesion_rate": 0.5,
        "vessel_threshold": 0.0,
        "split_fractions": [0.5, 0.25, 0.25],
    },
    "vae": {"base_channels": 4, "latent_channels": 2},
    "dit": {"hidden_size": 16, "depth": 1, "heads": 2, "text_blocks": 1},
    "diffusion": {"train_timesteps": 50, "sampling_steps": 2},
    "train": {"vae_steps": 2, "dit_steps": 2, "batch_size": 4, "log_every": 0},
    "eval": {"extractor": "vae-pooled", "ks": [1, 2], "probe_steps": 2, "max_videos": 4},
}


def tree(root: Path) -> dict:
    return {path.relative_to(root): path.read_bytes() for path in sorted(root.rglob("*")) if path.is_file()}


class PipelineCommandTestCase(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        self.config = self.root / "config.json"
        self.config.write_text(json.dumps(TINY_CONFIG))
        self.out = self.root / "run"

    def tearDown(self):
        self.directory.cleanup()

    def call(self, name: str, *args: str, out: Path = None) -> dict:
        stdout = io.StringIO()
        call_command(name, "--config", str(self.config), "--out", str(out or self.out), *args, stdout=stdout)
        return json.loads(stdout.getvalue())


class SynthCommandTests(PipelineCommandTestCase):
    def test_summary_echoes_the_resolved_config(self):
        summary = self.call("synth")
        self.assertEqual(summary["command"], "synth")
        self.assertEqual(summary["cases"], 16)
        self.assertEqual(summary["config"]["data"]["count"], 16)
        self.assertEqual(summary["config"]["dit"]["text_max_length"], 32)
        written = json.loads((self.out / "synth.summary.json").read_text())
        self.assertEqual(written, summary)

    def test_rerun_is_byte_identical(self):
        self.call("synth", out=self.root / "first")
        self.call("synth", out=self.root / "second")
        self.assertEqual(tree(self.root / "first" / "raw"), tree(self.root / "second" / "raw"))

    def test_seed_flag_overrides_the_config(self):
        summary = self.call("synth", "--seed", "9")
        self.assertEqual(summary["config"]["seed"], 9)

    def test_run_dispatches_hyphenated_names(self):
        stdout = io.StringIO()
        call_command("run", "synth", "--config", str(self.config), "--out", str(self.out), stdout=stdout)
        self.assertEqual(json.loads(stdout.getvalue())["command"], "synth")


class ExitCodeTests(PipelineCommandTestCase):
    def test_malformed_config_exits_with_two_and_the_key_path(self):
        self.config.write_text(json.dumps({"vae": {"latent_channels": 0}}))
        with self.assertRaises(CommandError) as cm:
            self.call("synth")
        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn("vae.latent_channels", str(cm.exception))

    def test_missing_config_exits_with_three(self):
        with self.assertRaises(CommandError) as cm:
            call_command("synth", "--config", str(self.root / "absent.json"), stdout=io.StringIO())
        self.assertEqual(cm.exception.returncode, 3)
        self.assertIn("absent.json", str(cm.exception))

    def test_missing_inputs_exit_with_three(self):
        with self.assertRaises(CommandError) as cm:
            self.call("preprocess")
        self.assertEqual(cm.exception.returncode, 3)
        self.assertIn("manifest.jsonl", str(cm.exception))

    def test_bad_k_list(self):
        with self.assertRaises(CommandError) as cm:
            self.call("audit_privacy", "--k", "5,x")
        self.assertEqual(cm.exception.returncode, 2)


class GradcheckCommandTests(PipelineCommandTestCase):
    def test_suite_passes(self):
        summary = self.call("gradcheck")
        self.assertTrue(summary["passed"])
        self.assertLess(summary["max_relative_error"], 1e-3)
        self.assertIn("vae_loss", summary["errors"])
        self.assertIn("dit_loss", summary["errors"])


@tag("slow")
class EndToEndTests(PipelineCommandTestCase):
    def test_full_pipeline(self):
        self.call("synth")
        preprocessed = self.call("preprocess")
        self.assertEqual(preprocessed["kept"], 16)
        split = self.call("split")
        self.assertEqual(sum(split["videos"].values()), 16)
        self.assertTrue(all(split["videos"][name] > 0 for name in ("train", "val", "test")))
        vae = self.call("train_vae")
        self.assertEqual(vae["steps"], 2)
        dit = self.call("train_dit")
        self.assertGreater(dit["latent_scale"], 0.0)

        generated = self.call("generate", "--prompt", "left eye, leakage, microaneurysms")
        self.assertEqual(generated["terms"], ["left", "eye", "leakage", "microaneurysms"])
        self.assertEqual(len(generated["frames"]), 5)
        self.assertGreater(generated["peak_decoder_activation"], 0)
        self.assertEqual(read_tvid(self.out / generated["video"]).shape, (1, 5, 16, 16))
        first_bytes = (self.out / generated["video"]).read_bytes()
        self.call("generate", "--prompt", "left eye, leakage, microaneurysms")
        self.assertEqual((self.out / generated["video"]).read_bytes(), first_bytes)

        evaluated = self.call("evaluate")
        metrics = json.loads((self.out / evaluated["metrics"]).read_text())
        self.assertEqual(metrics["extractor"], "vae-pooled")
        self.assertIsNotNone(metrics["frechet"])
        self.assertFalse(evaluated["gate"]["enabled"])

        audit = self.call("audit_privacy", "--k", "1,2")
        self.assertTrue(audit["stub_order_holds"])
        self.assertEqual(set(audit["copy_stub"]), {"1", "2"})
