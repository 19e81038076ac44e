"""
Closed vocabulary for angiography reports and prompts.

Lesion terms are single tokens even when they are two words
("disc staining", "macular edema"), so a prompt is reduced to a sequence of
known terms and anything outside the vocabulary is skipped.
"""

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import torch

from config.constants import TEXT_MAX_LENGTH
from exceptions import ShapeError

logger = logging.getLogger(__name__)

PAD = "<pad>"

LESIONS = (
    "microaneurysms",
    "leakage",
    "non-perfusion",
    "neovascularization",
    "disc staining",
    "macular edema",
)
LATERALITIES = ("left", "right")
DISEASE_LABELS = ("brvo", "crvo", "npdr", "pcv", "amd", "csc", "rp")
BACKGROUND_TERMS = (
    "eye",
    "no",
    "obvious",
    "abnormalities",
    "arterial",
    "venous",
    "late",
    "phase",
)
DESCRIPTIVE_TERMS = ("tortuous", "dilated", "scattered", "staining", "disc")

TERMS = (PAD, *LATERALITIES, *BACKGROUND_TERMS, *LESIONS, *DESCRIPTIVE_TERMS, *DISEASE_LABELS)

_WORD = re.compile(r"[a-z]+(?:-[a-z]+)*")


@dataclass(frozen=True)
class PromptTokens:
    """
    Token ids with a padding mask (True marks a real token). Both are 1-D for
    a single prompt or B·L for a batch.
    """

    ids: torch.Tensor
    mask: torch.Tensor

    def __post_init__(self):
        if self.ids.shape != self.mask.shape:
            raise ShapeError(
                f"token ids {tuple(self.ids.shape)} and mask {tuple(self.mask.shape)} differ"
            )
        if self.ids.dim() not in (1, 2):
            raise ShapeError(f"token ids must be 1-D or B·L, got {tuple(self.ids.shape)}")

    @property
    def length(self) -> int:
        return self.ids.shape[-1]

    def batched(self) -> "PromptTokens":
        if self.ids.dim() == 2:
            return self
        return PromptTokens(self.ids.unsqueeze(0), self.mask.unsqueeze(0))

    @classmethod
    def unconditional(cls, length: int = TEXT_MAX_LENGTH) -> "PromptTokens":
        return cls(torch.zeros(length, dtype=torch.long), torch.zeros(length, dtype=torch.bool))

    @classmethod
    def from_ids(cls, ids: Sequence[int]) -> "PromptTokens":
        # Id 0 is the padding term.
        tensor = torch.as_tensor(list(ids), dtype=torch.long)
        return cls(tensor, tensor != 0)

    @classmethod
    def stack(cls, prompts: Sequence["PromptTokens"]) -> "PromptTokens":
        return cls(
            torch.stack([p.ids for p in prompts]), torch.stack([p.mask for p in prompts])
        )


class Vocabulary:
    def __init__(self, terms: Iterable[str] = TERMS):
        self.terms = tuple(terms)
        self.index = {term: i for i, term in enumerate(self.terms)}
        self.phrases = {tuple(term.split()): term for term in self.terms if " " in term}

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def id_of(self, term: str) -> int:
        return self.index[term]

    def tokenize(self, text: str) -> list[str]:
        """
        Known terms of ``text`` in order, two-word phrases matched first.
        """
        words = _WORD.findall(text.lower())
        terms, i, skipped = [], 0, []
        while i < len(words):
            pair = tuple(words[i : i + 2])
            if pair in self.phrases:
                terms.append(self.phrases[pair])
                i += 2
                continue
            if words[i] in self.index and words[i] != PAD:
                terms.append(words[i])
            else:
                skipped.append(words[i])
            i += 1
        if skipped:
            logger.debug("skipped out-of-vocabulary words: %s", ", ".join(skipped))
        return terms

    def encode(self, text: str, max_length: int = TEXT_MAX_LENGTH) -> PromptTokens:
        terms = self.tokenize(text)
        if len(terms) > max_length:
            logger.warning("prompt has %d terms, keeping the first %d", len(terms), max_length)
            terms = terms[:max_length]
        ids = torch.zeros(max_length, dtype=torch.long)
        mask = torch.zeros(max_length, dtype=torch.bool)
        ids[: len(terms)] = torch.tensor([self.index[t] for t in terms], dtype=torch.long)
        mask[: len(terms)] = True
        return PromptTokens(ids, mask)

    def decode(self, prompt: PromptTokens) -> list[str]:
        return [self.terms[i] for i, keep in zip(prompt.ids.tolist(), prompt.mask.tolist()) if keep]


VOCABULARY = Vocabulary()


@dataclass(frozen=True)
class ParsedReport:
    laterality: Optional[str]
    lesions: frozenset


def parse_report(report: Union[str, PromptTokens]) -> ParsedReport:
    """
    Recovers laterality and the lesion set from report text or its tokens.
    """
    if isinstance(report, PromptTokens):
        terms = VOCABULARY.decode(report)
    else:
        terms = VOCABULARY.tokenize(report)
    laterality = next((t for t in terms if t in LATERALITIES), None)
    return ParsedReport(laterality, frozenset(t for t in terms if t in LESIONS))
