from typing import Optional

from config.constants import TEXT_MAX_LENGTH
from dataset.synth import SyntheticCase
from dit.vocabulary import LESIONS, VOCABULARY, PromptTokens

# One fixed sentence per lesion. None of them names another lesion, so the
# lesion set is recoverable from the tokens alone.
LESION_SENTENCES = {
    "microaneurysms": "Scattered microaneurysms appear from the venous phase.",
    "leakage": "Leakage enlarges in the late phase.",
    "non-perfusion": "Capillary non-perfusion areas show no filling.",
    "neovascularization": "Neovascularization leaks along the vessel margin.",
    "disc staining": "The optic disc rim stains late.",
    "macular edema": "Macular edema pools in the late phase.",
}
NORMAL_SENTENCE = "No obvious abnormalities. Vessels fill through the arterial and venous phase."
# Built from out-of-vocabulary words only: it tells cases apart without
# changing their tokens.
TIMING_SENTENCE = "Filling onsets at {:.1%}, {:.1%} and {:.1%} of the study."


def report_text(laterality: str, lesions, onsets: Optional[tuple[float, float, float]] = None) -> str:
    ordered = [lesion for lesion in LESIONS if lesion in lesions]
    header = f"{laterality.capitalize()} eye:"
    if not ordered:
        body = NORMAL_SENTENCE
    else:
        sentences = " ".join(LESION_SENTENCES[lesion] for lesion in ordered)
        body = f"{', '.join(ordered)}. {sentences}"
    if onsets is None:
        return f"{header} {body}"
    return f"{header} {body} {TIMING_SENTENCE.format(*onsets)}"


def case_to_report(
    case: SyntheticCase, max_length: int = TEXT_MAX_LENGTH
) -> tuple[str, PromptTokens]:
    text = report_text(case.laterality, case.lesions, case.onsets)
    return text, VOCABULARY.encode(text, max_length)
