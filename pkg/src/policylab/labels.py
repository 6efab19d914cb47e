"""Closed label vocabularies and the segment-level label record."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping


class DataCategory(str, Enum):
    CONTACT = "contact"
    LOCATION = "location"
    DEVICE = "device"
    DEMOGRAPHIC = "demographic"
    FINANCIAL = "financial"
    HEALTH = "health"
    SURVEY = "survey"
    PERSONAL_IDENTIFIER = "personal_identifier"
    SOCIAL_MEDIA = "social_media"


class DataAction(str, Enum):
    COLLECT_USE = "collect_use"
    SHARE = "share"
    STORE = "store"


class ActionMode(str, Enum):
    ASSERT = "assert"
    DENIAL = "denial"
    CHOICE = "choice"
    NOT_MENTIONED = "not_mentioned"
    AMBIGUOUS = "ambiguous"


# Class index order for the 5-class action-mode classifier.
MODE_CLASS_ORDER = (
    ActionMode.DENIAL,
    ActionMode.ASSERT,
    ActionMode.CHOICE,
    ActionMode.AMBIGUOUS,
    ActionMode.NOT_MENTIONED,
)
MODE_TO_CLASS = {m: i for i, m in enumerate(MODE_CLASS_ORDER)}

# Binary relevance classifier order: [irrelevant, relevant].
RELEVANT_CLASS = 1
IRRELEVANT_CLASS = 0


class Provenance(str, Enum):
    ANNOTATED = "annotated"
    SYSTEM_AMBIGUOUS = "system_ambiguous"
    BOOTSTRAP = "bootstrap"
    REPLAY = "replay"


@dataclass(frozen=True)
class SegmentRef:
    doc_id: str
    first_index: int
    last_index: int

    def key(self, category: DataCategory) -> tuple:
        return (self.doc_id, category.value, self.first_index, self.last_index)


@dataclass(frozen=True)
class SegmentLabel:
    segment: SegmentRef
    category: DataCategory
    relevant: bool
    modes: Mapping[DataAction, ActionMode]
    provenance: Provenance = Provenance.ANNOTATED

    def __post_init__(self):
        if not self.relevant:
            coerced = {a: ActionMode.NOT_MENTIONED for a in DataAction}
            object.__setattr__(self, "modes", coerced)
        else:
            object.__setattr__(self, "modes", dict(self.modes))

    @property
    def trainable(self) -> bool:
        return self.provenance is not Provenance.SYSTEM_AMBIGUOUS

    def to_dict(self) -> dict:
        return {
            "doc_id": self.segment.doc_id,
            "first_index": self.segment.first_index,
            "last_index": self.segment.last_index,
            "category": self.category.value,
            "relevant": self.relevant,
            "modes": {a.value: m.value for a, m in self.modes.items()},
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "SegmentLabel":
        return cls(
            segment=SegmentRef(rec["doc_id"], rec["first_index"], rec["last_index"]),
            category=DataCategory(rec["category"]),
            relevant=bool(rec["relevant"]),
            modes={DataAction(a): ActionMode(m) for a, m in rec.get("modes", {}).items()},
            provenance=Provenance(rec.get("provenance", "annotated")),
        )
