import torch
from django.test import SimpleTestCase

from dataset.reports import case_to_report, report_text
from dataset.synth import random_case
from dit.vocabulary import BACKGROUND_TERMS, LATERALITIES, LESIONS, VOCABULARY, parse_report


class CaseToReportTests(SimpleTestCase):
    def test_healthy_eye_uses_background_tokens_only(self):
        text, tokens = case_to_report(random_case(0, lesions=()))
        self.assertIn("No obvious abnormalities", text)
        allowed = {VOCABULARY.id_of(term) for term in (*LATERALITIES, *BACKGROUND_TERMS)}
        real = set(tokens.ids[tokens.mask].tolist())
        self.assertTrue(real)
        self.assertLessEqual(real, allowed)

    def test_lesion_tokens_are_exactly_the_case_lesions(self):
        _, tokens = case_to_report(random_case(1, lesions={"microaneurysms", "leakage"}))
        lesion_ids = {VOCABULARY.id_of(lesion) for lesion in LESIONS}
        present = set(tokens.ids[tokens.mask].tolist()) & lesion_ids
        self.assertEqual(present, {VOCABULARY.id_of("microaneurysms"), VOCABULARY.id_of("leakage")})

    def test_template_order_follows_the_lesion_list(self):
        text = report_text("right", {"leakage", "microaneurysms"})
        self.assertTrue(text.startswith("Right eye: microaneurysms, leakage."))

    def test_parse_inverts_the_template(self):
        for seed in range(1000):
            case = random_case(seed)
            text, tokens = case_to_report(case)
            self.assertEqual(parse_report(tokens).lesions, case.lesions)
            self.assertEqual(parse_report(text).laterality, case.laterality)

    def test_full_report_fits_the_prompt_length(self):
        _, tokens = case_to_report(random_case(2, lesions=LESIONS))
        self.assertFalse(tokens.mask.all())
        self.assertEqual(parse_report(tokens).lesions, frozenset(LESIONS))

    def test_reports_tell_cases_apart_without_changing_tokens(self):
        cases = [random_case(seed, lesions={"leakage"}) for seed in range(20)]
        left = [case for case in cases if case.laterality == "left"]
        reports = [case_to_report(case) for case in left]
        self.assertGreater(len(reports), 1)
        self.assertEqual(len({text for text, _ in reports}), len(reports))
        for _, tokens in reports[1:]:
            self.assertTrue(torch.equal(tokens.ids, reports[0][1].ids))

    def test_timing_sentence_carries_the_onsets(self):
        text = report_text("left", {"leakage"}, (0.04, 0.312, 0.5))
        self.assertTrue(text.endswith("Filling onsets at 4.0%, 31.2% and 50.0% of the study."))
        self.assertEqual(parse_report(text).lesions, frozenset({"leakage"}))
