import torch
from django.test import SimpleTestCase

from dit.vocabulary import LESIONS, VOCABULARY, PromptTokens, parse_report
from exceptions import ShapeError


class VocabularyTests(SimpleTestCase):
    def test_two_word_lesions_are_single_terms(self):
        self.assertEqual(
            VOCABULARY.tokenize("Right eye: disc staining, macular edema."),
            ["right", "eye", "disc staining", "macular edema"],
        )

    def test_unknown_words_are_skipped(self):
        self.assertEqual(VOCABULARY.tokenize("Fluorescein leakage, quite marked"), ["leakage"])

    def test_lone_disc_is_descriptive(self):
        self.assertEqual(VOCABULARY.tokenize("the optic disc rim"), ["disc"])

    def test_encode_pads_to_max_length(self):
        prompt = VOCABULARY.encode("left eye, leakage, microaneurysms", max_length=8)
        self.assertEqual(prompt.ids.shape, (8,))
        self.assertEqual(prompt.mask.tolist(), [True] * 4 + [False] * 4)
        self.assertEqual(prompt.ids[4:].tolist(), [0] * 4)
        self.assertEqual(VOCABULARY.decode(prompt), ["left", "eye", "leakage", "microaneurysms"])

    def test_long_prompt_is_truncated(self):
        prompt = VOCABULARY.encode(" ".join(["leakage"] * 40), max_length=8)
        self.assertTrue(torch.all(prompt.mask))

    def test_unconditional_prompt_is_all_padding(self):
        prompt = PromptTokens.unconditional(6)
        self.assertFalse(prompt.mask.any())
        self.assertEqual(prompt.ids.tolist(), [0] * 6)

    def test_mask_must_match_ids(self):
        with self.assertRaises(ShapeError):
            PromptTokens(torch.zeros(4, dtype=torch.long), torch.zeros(3, dtype=torch.bool))

    def test_stack(self):
        prompts = [VOCABULARY.encode("leakage", 5), PromptTokens.unconditional(5)]
        self.assertEqual(PromptTokens.stack(prompts).ids.shape, (2, 5))

    def test_every_lesion_is_in_vocabulary(self):
        for lesion in LESIONS:
            self.assertIn(lesion, VOCABULARY)


class ParseReportTests(SimpleTestCase):
    def test_text(self):
        parsed = parse_report("Left eye: non-perfusion, neovascularization. Tortuous vessels.")
        self.assertEqual(parsed.laterality, "left")
        self.assertEqual(parsed.lesions, frozenset({"non-perfusion", "neovascularization"}))

    def test_tokens(self):
        parsed = parse_report(VOCABULARY.encode("right eye, macular edema"))
        self.assertEqual(parsed.laterality, "right")
        self.assertEqual(parsed.lesions, frozenset({"macular edema"}))

    def test_background_only(self):
        parsed = parse_report("No obvious abnormalities.")
        self.assertIsNone(parsed.laterality)
        self.assertEqual(parsed.lesions, frozenset())
