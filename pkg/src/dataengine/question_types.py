"""The closed set of 18 question types used to organize the bad-case pool."""

from __future__ import annotations

import enum
from typing import Optional


class QuestionType(enum.Enum):
    FUNCTION_REASONING = "function reasoning"
    IDENTITY_REASONING = "identity reasoning"
    KNOWLEDGE_BASED_REASONING = "knowledge-based reasoning"
    PHYSICAL_PROPERTY_REASONING = "physical property reasoning"
    ATTRIBUTE_RECOGNITION = "attribute recognition"
    ACTION_RECOGNITION = "action recognition"
    PHYSICAL_RELATION = "physical relation"
    NATURE_RELATION = "nature relation"
    SOCIAL_RELATION = "social relation"
    SPATIAL_RELATIONSHIP = "spatial relationship"
    ATTRIBUTE_COMPARISON = "attribute comparison"
    OBJECT_LOCALIZATION = "object localization"
    IMAGE_TOPIC = "image topic"
    IMAGE_QUALITY = "image quality"
    IMAGE_EMOTION = "image emotion"
    IMAGE_STYLE = "image style"
    IMAGE_SCENE = "image scene"
    FUTURE_PREDICTION = "future prediction"

    @property
    def canonical(self) -> str:
        return self.value

    def __str__(self) -> str:
        return self.value


def _normalize(text: str) -> str:
    return " ".join(text.replace("_", " ").replace("-", " ").casefold().split())


_BY_NORMALIZED = {_normalize(qt.value): qt for qt in QuestionType}

assert len(QuestionType) == 18
assert len(_BY_NORMALIZED) == 18


def parse_question_type(text: str) -> Optional[QuestionType]:
    """Exact match against a canonical name after case-fold/trim/sep normalization."""
    return _BY_NORMALIZED.get(_normalize(text))


def find_question_types(text: str) -> list[QuestionType]:
    """All distinct canonical names occurring as substrings of free-form text."""
    folded = _normalize(text)
    return [qt for qt in QuestionType if _normalize(qt.value) in folded]
