"""Category-relevant sentence selection and contextual segment expansion."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Policy, Sentence
from .embedding import OutOfVocabularyError, WmdStats, WordVectorTable, document_wmd_stats, wmd_texts
from .labels import RELEVANT_CLASS, DataCategory, SegmentRef

DEFAULT_MAX_SPAN = 8
DEFAULT_TAU_REL = 0.5


@dataclass(frozen=True)
class Segment:
    doc_id: str
    category: DataCategory
    first_index: int
    last_index: int
    seed_index: int
    text: str

    def ref(self) -> SegmentRef:
        return SegmentRef(self.doc_id, self.first_index, self.last_index)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "category": self.category.value,
            "first_index": self.first_index,
            "last_index": self.last_index,
            "seed_index": self.seed_index,
            "text": self.text,
        }


def _segment_text(policy: Policy, first: int, last: int) -> str:
    return " ".join(policy.sentences[i].text for i in range(first, last + 1))


def relevant_sentences(
    policy: Policy, category_model, tau_rel: float = DEFAULT_TAU_REL
) -> list[tuple[Sentence, float]]:
    """Sentences whose P(relevant) meets the threshold, in document order."""
    texts = [s.text for s in policy.sentences]
    probs = category_model.predict_proba(texts)[:, RELEVANT_CLASS]
    return [(s, float(p)) for s, p in zip(policy.sentences, probs) if p >= tau_rel]


def contextualize(
    seed: Sentence,
    policy: Policy,
    category: DataCategory,
    stats: WmdStats,
    table: WordVectorTable,
    max_span: int = DEFAULT_MAX_SPAN,
) -> Segment:
    """Grow a segment around the seed sentence.

    Alternates between the previous and next neighbor (previous first); a
    neighbor joins when its WMD to the pooled text of the current segment is
    at or below the document threshold. A rejected or out-of-vocabulary
    neighbor closes that side permanently.
    """
    n = len(policy.sentences)
    first = last = seed.index
    prev_open = first > 0
    next_open = last < n - 1
    prefer_prev = True
    while (prev_open or next_open) and (last - first + 1) < max_span:
        take_prev = prev_open and (prefer_prev or not next_open)
        idx = first - 1 if take_prev else last + 1
        current = _segment_text(policy, first, last)
        try:
            dist = wmd_texts(policy.sentences[idx].text, current, table)
            joined = dist <= stats.threshold
        except OutOfVocabularyError:
            joined = False
        if take_prev:
            if joined:
                first = idx
                prev_open = first > 0
            else:
                prev_open = False
        else:
            if joined:
                last = idx
                next_open = last < n - 1
            else:
                next_open = False
        prefer_prev = not take_prev
    return Segment(
        doc_id=policy.doc_id,
        category=category,
        first_index=first,
        last_index=last,
        seed_index=seed.index,
        text=_segment_text(policy, first, last),
    )


def segment_policy(
    policy: Policy,
    category: DataCategory,
    category_model,
    table: WordVectorTable,
    alpha: float = 0.5,
    tau_rel: float = DEFAULT_TAU_REL,
    max_span: int = DEFAULT_MAX_SPAN,
) -> list[Segment]:
    """End-to-end segmentation of one policy for one data category.

    Each relevant sentence is contextualized; overlapping segments are merged
    into their union so annotators never see near-duplicate surveys.
    """
    seeds = relevant_sentences(policy, category_model, tau_rel)
    if not seeds:
        return []
    try:
        stats = document_wmd_stats(policy, table, alpha=alpha)
    except ValueError:
        # Single-sentence (or OOV-dominated) policy: no expansion possible.
        stats = WmdStats(mean=0.0, std=0.0, threshold=-1.0, alpha=alpha)
    segments = [
        contextualize(s, policy, category, stats, table, max_span=max_span)
        for s, _ in seeds
    ]
    segments.sort(key=lambda g: (g.first_index, g.last_index))
    merged: list[Segment] = []
    for seg in segments:
        if merged and seg.first_index <= merged[-1].last_index:
            prev = merged[-1]
            last = max(prev.last_index, seg.last_index)
            merged[-1] = Segment(
                doc_id=prev.doc_id,
                category=category,
                first_index=prev.first_index,
                last_index=last,
                seed_index=prev.seed_index,
                text=_segment_text(policy, prev.first_index, last),
            )
        else:
            merged.append(seg)
    return merged
