import torch
from django.test import SimpleTestCase, tag

from dataset.reports import report_text
from dataset.synth import random_case, synth_render
from dit.vocabulary import VOCABULARY
from evaluation.probe import (
    LesionProbe,
    alignment_gate,
    lesion_labels,
    lesion_probe_alignment,
    per_lesion_accuracy,
    readback_token_ids,
    train_probe,
)
from exceptions import ConfigError, ProbeNotTrainedError, ShapeError


def balanced_corpus(count: int, offset: int = 0, size: int = 32) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Alternating leakage-only and healthy cases.
    """
    videos, rows = [], []
    for index in range(offset, offset + count):
        lesions = {"leakage"} if index % 2 == 0 else set()
        videos.append(synth_render(random_case(index, lesions=lesions), 9, (size, size)).tensor)
        rows.append([bool(lesions)])
    return torch.stack(videos), torch.tensor(rows)


class LesionLabelTests(SimpleTestCase):
    def test_labels_follow_report_terms(self):
        labels = lesion_labels(
            [report_text("left", {"leakage"}), report_text("right", set())], ("leakage", "non-perfusion")
        )
        self.assertEqual(labels.tolist(), [[True, False], [False, False]])


class LesionProbeTests(SimpleTestCase):
    def test_untrained_probe_is_rejected(self):
        videos = torch.rand(2, 1, 5, 16, 16)
        with self.assertRaises(ProbeNotTrainedError):
            lesion_probe_alignment(LesionProbe(), videos, torch.zeros(2, 6, dtype=torch.bool))

    def test_output_is_one_logit_per_lesion(self):
        self.assertEqual(tuple(LesionProbe(("leakage", "macular edema"))(torch.rand(3, 1, 5, 16, 16)).shape), (3, 2))

    def test_label_shape_is_checked(self):
        with self.assertRaises(ShapeError):
            train_probe(torch.rand(4, 1, 5, 16, 16), torch.zeros(4, 2, dtype=torch.bool), ("leakage",), steps=1)

    def test_needs_at_least_one_step(self):
        with self.assertRaisesMessage(ConfigError, "eval.probe_steps"):
            train_probe(torch.rand(2, 1, 5, 16, 16), torch.zeros(2, 1, dtype=torch.bool), ("leakage",), steps=0)

    def test_training_is_deterministic(self):
        videos, labels = balanced_corpus(4, size=16)
        first = train_probe(videos, labels, ("leakage",), steps=3)
        second = train_probe(videos, labels, ("leakage",), steps=3)
        for a, b in zip(first.parameters(), second.parameters()):
            self.assertTrue(torch.equal(a, b))
        self.assertTrue(first.trained)

    def test_global_rng_does_not_change_initial_weights(self):
        videos, labels = balanced_corpus(4, size=16)
        torch.manual_seed(1)
        first = train_probe(videos, labels, ("leakage",), steps=2, generator=torch.Generator().manual_seed(9))
        torch.manual_seed(2)
        second = train_probe(videos, labels, ("leakage",), steps=2, generator=torch.Generator().manual_seed(9))
        for a, b in zip(first.parameters(), second.parameters()):
            self.assertTrue(torch.equal(a, b))

    def test_generator_seed_changes_initial_weights(self):
        videos, labels = balanced_corpus(4, size=16)
        first = train_probe(videos, labels, ("leakage",), steps=1, generator=torch.Generator().manual_seed(1))
        second = train_probe(videos, labels, ("leakage",), steps=1, generator=torch.Generator().manual_seed(2))
        self.assertFalse(torch.equal(first.head.weight, second.head.weight))

    def test_readback_writes_template_reports(self):
        videos, labels = balanced_corpus(2, size=16)
        probe = train_probe(videos, labels, ("leakage",), steps=1)
        reports = readback_token_ids(probe, videos, ["right", None])
        self.assertEqual(len(reports), 2)
        self.assertEqual(reports[0][0], VOCABULARY.id_of("right"))
        self.assertEqual(reports[1][0], VOCABULARY.id_of("left"))
        self.assertNotIn(0, reports[0])

    @tag("slow")
    def test_probe_reads_real_videos(self):
        videos, labels = balanced_corpus(64)
        held_out, held_labels = balanced_corpus(32, offset=1000)
        probe = train_probe(videos, labels, ("leakage",), steps=300, generator=torch.Generator().manual_seed(0))
        self.assertGreaterEqual(per_lesion_accuracy(probe, held_out, held_labels)["leakage"], 0.9)


class AlignmentGateTests(SimpleTestCase):
    def test_clear_signal_passes(self):
        agreement = torch.tensor([True] * 56 + [False] * 8)
        gate = alignment_gate(agreement)
        self.assertTrue(gate.passed)
        self.assertLess(gate.p_value, 0.01)
        self.assertEqual((gate.successes, gate.trials), (56, 64))

    def test_chance_level_fails(self):
        gate = alignment_gate(torch.tensor([True, False] * 32))
        self.assertFalse(gate.passed)
        self.assertGreater(gate.p_value, 0.4)

    def test_needs_trials(self):
        with self.assertRaises(ShapeError):
            alignment_gate(torch.zeros(0, dtype=torch.bool))
