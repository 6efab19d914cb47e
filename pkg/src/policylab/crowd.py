"""Crowdsourcing machinery: surveys, annotator sources, agreement-based
aggregation, relabeling policies, and the event-sourced cost ledger.

A survey asks five questions about one segment: relevance (yes/no), one
action-mode question per data action, and an honesty check. Five annotators
answer each issued survey; labels are accepted only when every label
question clears the acceptance threshold (4/5, or 8/10 and 12/15 when
rejected surveys are incrementally relabeled).
"""

from __future__ import annotations

import itertools
import json
import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .labels import (
    ActionMode,
    DataAction,
    DataCategory,
    Provenance,
    SegmentLabel,
    SegmentRef,
)
from .segmenter import Segment

YES_NO = ("yes", "no")
MODE_OPTIONS = tuple(m.value for m in ActionMode)

Q_RELEVANCE = "relevance"
Q_HONESTY = "honesty"


def mode_question(action: DataAction) -> str:
    return f"mode:{action.value}"


# Label questions: agreement is computed over these; honesty only voids.
LABEL_QUESTIONS = (Q_RELEVANCE,) + tuple(mode_question(a) for a in DataAction)
ALL_QUESTIONS = LABEL_QUESTIONS + (Q_HONESTY,)

QUESTION_OPTIONS: dict[str, tuple[str, ...]] = {
    Q_RELEVANCE: YES_NO,
    Q_HONESTY: YES_NO,
    **{mode_question(a): MODE_OPTIONS for a in DataAction},
}

DEFAULT_ACCEPTANCE_THRESHOLD = 0.8
DEFAULT_ANNOTATORS_PER_SURVEY = 5
MAX_ATTEMPTS = 3
DEFAULT_UNIT_COST = 0.22
UNIT_COST_RANGE = (0.16, 0.25)


class PoolExhaustedError(RuntimeError):
    """Not enough fresh annotators for a survey."""


@dataclass(frozen=True)
class Survey:
    survey_id: str
    segment: Segment
    category: DataCategory
    attempt: int = 1
    unit_cost: float = DEFAULT_UNIT_COST

    def __post_init__(self):
        if not 1 <= self.attempt <= MAX_ATTEMPTS:
            raise ValueError(f"attempt {self.attempt} outside 1..{MAX_ATTEMPTS}")

    @property
    def questions(self) -> tuple[str, ...]:
        return ALL_QUESTIONS


@dataclass(frozen=True)
class Annotation:
    survey_id: str
    annotator_id: str
    answers: dict[str, str]

    def __post_init__(self):
        missing = [q for q in ALL_QUESTIONS if q not in self.answers]
        if missing:
            raise ValueError(f"incomplete annotation, missing {missing}")
        for q, a in self.answers.items():
            if a not in QUESTION_OPTIONS.get(q, ()):
                raise ValueError(f"invalid answer {a!r} for question {q!r}")

    @property
    def honest(self) -> bool:
        return self.answers[Q_HONESTY] == "yes"


@dataclass(frozen=True)
class AggregationOutcome:
    survey_id: str
    modal_answers: dict[str, str]
    agreements: dict[str, float]
    accepted: bool
    voided: bool
    pooled_count: int
    label: Optional[SegmentLabel] = None

    @property
    def min_agreement(self) -> float:
        return min(self.agreements.values()) if self.agreements else 0.0

    @property
    def avg_agreement(self) -> float:
        return sum(self.agreements.values()) / len(self.agreements) if self.agreements else 0.0


# ------------------------------------------------------------ ground truth


class GroundTruthStore:
    """Segment-level reference labels keyed by (doc, category, range)."""

    def __init__(self, labels: Iterable[SegmentLabel] = ()):
        self._by_key: dict[tuple, SegmentLabel] = {}
        for lab in labels:
            self.add(lab)

    def add(self, label: SegmentLabel) -> None:
        self._by_key[label.segment.key(label.category)] = label

    def lookup(self, segment: Segment, category: DataCategory) -> SegmentLabel:
        """Exact-span match, falling back to the stored label with the
        largest span overlap in the same document and category; a segment
        with no truth at all reads as irrelevant."""
        key = (segment.doc_id, category.value, segment.first_index, segment.last_index)
        exact = self._by_key.get(key)
        if exact is not None:
            return exact
        best: Optional[SegmentLabel] = None
        best_overlap = 0
        for (doc, cat, first, last), lab in self._by_key.items():
            if doc != segment.doc_id or cat != category.value:
                continue
            overlap = min(last, segment.last_index) - max(first, segment.first_index) + 1
            if overlap > best_overlap:
                best_overlap = overlap
                best = lab
        if best is not None:
            return best
        return SegmentLabel(
            segment=SegmentRef(segment.doc_id, segment.first_index, segment.last_index),
            category=category,
            relevant=False,
            modes={},
        )

    def correct_answers(self, survey: Survey) -> dict[str, str]:
        label = self.lookup(survey.segment, survey.category)
        answers = {Q_RELEVANCE: "yes" if label.relevant else "no"}
        for action in DataAction:
            answers[mode_question(action)] = label.modes[action].value
        return answers

    def __len__(self) -> int:
        return len(self._by_key)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "GroundTruthStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    store.add(SegmentLabel.from_dict(json.loads(line)))
        return store

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for label in self._by_key.values():
                fh.write(json.dumps(label.to_dict()) + "\n")


# --------------------------------------------------------------- sources


class AnnotatorSource(ABC):
    """A pool of qualified annotators that can answer surveys.

    Enforces the no-repeat rule: an annotator never answers the same survey
    id twice (pooled relabeling attempts use fresh annotators).
    """

    def __init__(self, pool_size: int, seed: int = 0):
        self.pool_size = pool_size
        self.rng = np.random.default_rng(seed)
        self._seen: dict[str, set[int]] = {}

    def fresh_annotators(self, survey_id: str, n: int) -> list[int]:
        # Keyed on the base id so relabeling attempts ("id#a2...") and
        # republishes never re-invite an annotator who saw the segment.
        seen = self._seen.setdefault(survey_id.split("#")[0], set())
        available = [i for i in range(self.pool_size) if i not in seen]
        if len(available) < n:
            raise PoolExhaustedError(
                f"survey {survey_id}: need {n} fresh annotators, have {len(available)}"
            )
        chosen = available[:n]
        seen.update(chosen)
        return chosen

    @abstractmethod
    def answer(self, survey: Survey, annotator: int) -> dict[str, str]:
        """Answers to all five questions from one annotator."""

    def collect(self, survey: Survey, n: int) -> list[Annotation]:
        return [
            Annotation(survey.survey_id, f"ann-{i}", self.answer(survey, i))
            for i in self.fresh_annotators(survey.survey_id, n)
        ]

    def screen_document(self, policy_text: str, category: DataCategory) -> bool:
        """Document-level pre-screen: does the policy mention the category?

        Default heuristic: the category name (underscores as spaces) occurs
        in the text. Truth-backed sources override this.
        """
        return category.value.replace("_", " ") in policy_text.lower()


class SimulatedAnnotatorSource(AnnotatorSource):
    """Annotators answer correctly with per-annotator accuracy p and pick
    uniformly among the wrong options otherwise; p ~ Beta(a, b) unless a
    fixed accuracy is given."""

    def __init__(
        self,
        truth: GroundTruthStore,
        pool_size: int = 1000,
        accuracy: Optional[float] = None,
        beta_params: tuple[float, float] = (8.0, 2.0),
        honesty_prob: float = 1.0,
        seed: int = 0,
    ):
        super().__init__(pool_size, seed)
        self.truth = truth
        self.honesty_prob = honesty_prob
        if accuracy is not None:
            self.accuracies = np.full(pool_size, float(accuracy))
        else:
            self.accuracies = self.rng.beta(*beta_params, size=pool_size)

    def answer(self, survey: Survey, annotator: int) -> dict[str, str]:
        correct = self.truth.correct_answers(survey)
        p = self.accuracies[annotator]
        answers: dict[str, str] = {}
        for q in LABEL_QUESTIONS:
            if self.rng.random() < p:
                answers[q] = correct[q]
            else:
                wrong = [o for o in QUESTION_OPTIONS[q] if o != correct[q]]
                answers[q] = wrong[self.rng.integers(len(wrong))]
        answers[Q_HONESTY] = "yes" if self.rng.random() < self.honesty_prob else "no"
        return answers

    def screen_document(self, policy_text: str, category: DataCategory) -> bool:
        return super().screen_document(policy_text, category)


class ReplayAnnotatorSource(SimulatedAnnotatorSource):
    """Answers from a ground-truth store with configurable noise (default 0)."""

    def __init__(self, truth: GroundTruthStore, pool_size: int = 1000, noise: float = 0.0, seed: int = 0):
        super().__init__(truth, pool_size=pool_size, accuracy=1.0 - noise, seed=seed)


class DeterministicDisagreementSource(AnnotatorSource):
    """Fixed per-annotator answers producing a constant disagreement split.

    The first ``agree_of_5`` of every 5 annotators give the correct answer,
    the rest a fixed wrong one, so pooled agreement never improves (3/5 ->
    6/10 -> 9/15). Used to show relabeling cannot recover such surveys.
    """

    def __init__(self, truth: GroundTruthStore, pool_size: int = 100, agree_of_5: int = 3, seed: int = 0):
        super().__init__(pool_size, seed)
        self.truth = truth
        self.agree_of_5 = agree_of_5

    def answer(self, survey: Survey, annotator: int) -> dict[str, str]:
        correct = self.truth.correct_answers(survey)
        majority = annotator % 5 < self.agree_of_5
        answers: dict[str, str] = {}
        for q in LABEL_QUESTIONS:
            if majority:
                answers[q] = correct[q]
            else:
                answers[q] = next(o for o in QUESTION_OPTIONS[q] if o != correct[q])
        answers[Q_HONESTY] = "yes"
        return answers


class AmbiguitySource(AnnotatorSource):
    """Per-segment answer distributions drawn near-uniform over the options,
    modeling inherently ambiguous segments."""

    def __init__(self, pool_size: int = 1000, concentration: float = 5.0, seed: int = 0):
        super().__init__(pool_size, seed)
        self.concentration = concentration
        self._dists: dict[tuple[str, str], np.ndarray] = {}

    def _dist(self, survey_id: str, q: str) -> np.ndarray:
        key = (survey_id.split("#")[0], q)  # stable across relabel attempts
        if key not in self._dists:
            k = len(QUESTION_OPTIONS[q])
            self._dists[key] = self.rng.dirichlet(np.full(k, self.concentration))
        return self._dists[key]

    def answer(self, survey: Survey, annotator: int) -> dict[str, str]:
        answers: dict[str, str] = {}
        for q in LABEL_QUESTIONS:
            opts = QUESTION_OPTIONS[q]
            answers[q] = opts[self.rng.choice(len(opts), p=self._dist(survey.survey_id, q))]
        answers[Q_HONESTY] = "yes"
        return answers


def collect_annotations(survey: Survey, source: AnnotatorSource, n: int) -> list[Annotation]:
    """n annotations from distinct annotators who have not seen this survey."""
    return source.collect(survey, n)


# ------------------------------------------------------------ aggregation


def aggregate(
    survey: Survey,
    annotations: Sequence[Annotation],
    acceptance_threshold: float = DEFAULT_ACCEPTANCE_THRESHOLD,
) -> AggregationOutcome:
    """Per-question modal vote with min-over-questions acceptance.

    Any annotator answering the honesty check with "no" voids the whole
    batch (the survey is republished and these annotations are discarded,
    though the spend stays on the ledger). Ties keep the tied count as the
    modal count, which can never clear an 80% threshold.
    """
    if not annotations:
        raise ValueError("no annotations to aggregate")
    ids = {a.survey_id for a in annotations}
    if len(ids) != 1 or annotations[0].survey_id != survey.survey_id:
        raise ValueError("annotations do not all belong to this survey")
    seen_annotators = [a.annotator_id for a in annotations]
    if len(set(seen_annotators)) != len(seen_annotators):
        raise ValueError("duplicate annotator in batch")

    if any(not a.honest for a in annotations):
        return AggregationOutcome(
            survey_id=survey.survey_id,
            modal_answers={},
            agreements={},
            accepted=False,
            voided=True,
            pooled_count=len(annotations),
        )

    total = len(annotations)
    modal: dict[str, str] = {}
    agreements: dict[str, float] = {}
    for q in LABEL_QUESTIONS:
        counts = Counter(a.answers[q] for a in annotations)
        answer, votes = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
        modal[q] = answer
        agreements[q] = votes / total

    accepted = min(agreements.values()) >= acceptance_threshold
    label = None
    if accepted:
        label = SegmentLabel(
            segment=survey.segment.ref(),
            category=survey.category,
            relevant=modal[Q_RELEVANCE] == "yes",
            modes={a: ActionMode(modal[mode_question(a)]) for a in DataAction},
            provenance=Provenance.ANNOTATED,
        )
    return AggregationOutcome(
        survey_id=survey.survey_id,
        modal_answers=modal,
        agreements=agreements,
        accepted=accepted,
        voided=False,
        pooled_count=total,
        label=label,
    )


# ----------------------------------------------------------- relabeling


class RelabelPolicy(str, Enum):
    LABEL_AND_DISCARD = "label_and_discard"
    INCREMENTAL = "incremental"


class DirectiveKind(str, Enum):
    ACCEPT = "accept"
    DISCARD_WASTED = "discard_wasted"
    REREQUEST = "rerequest"
    MARK_AMBIGUOUS = "mark_ambiguous"


@dataclass(frozen=True)
class Directive:
    kind: DirectiveKind
    n: int = 0


def apply_relabel_policy(
    outcome: AggregationOutcome, policy: RelabelPolicy, attempt: int
) -> Directive:
    """Decide the next step for one aggregated survey.

    Incremental relabeling pools all prior annotations and re-requests 5
    more, testing 4/5 -> 8/10 -> 12/15; after the third failed attempt the
    segment is marked system-ambiguous and excluded from training.
    """
    if attempt > MAX_ATTEMPTS:
        raise ValueError(f"attempt {attempt} exceeds the cap of {MAX_ATTEMPTS}")
    if outcome.accepted:
        return Directive(DirectiveKind.ACCEPT)
    if policy is RelabelPolicy.LABEL_AND_DISCARD:
        return Directive(DirectiveKind.DISCARD_WASTED)
    if attempt < MAX_ATTEMPTS:
        return Directive(DirectiveKind.REREQUEST, n=DEFAULT_ANNOTATORS_PER_SURVEY)
    return Directive(DirectiveKind.MARK_AMBIGUOUS)


def plan_requests(target_accepted: int, estimated_acceptance_rate: float) -> int:
    """Surveys to issue so the expected accepted count reaches the target."""
    if not 0.0 < estimated_acceptance_rate <= 1.0:
        raise ValueError(f"acceptance rate {estimated_acceptance_rate} outside (0, 1]")
    return math.ceil(target_accepted / estimated_acceptance_rate)


# --------------------------------------------------------------- ledger


@dataclass(frozen=True)
class CostLedger:
    total_spend: float
    surveys_issued: int
    accepted_labels: int
    wasted_requests: int
    ambiguous: int
    voided: int
    cost_per_accepted: Optional[float]

    def cost_per_accepted_label(
        self, annotators_per_survey: int = DEFAULT_ANNOTATORS_PER_SURVEY
    ) -> Optional[float]:
        """Cost of one accepted label counting every annotator payment."""
        if self.cost_per_accepted is None:
            return None
        return self.cost_per_accepted * annotators_per_survey


class LedgerEventLog:
    """Append-only event log; all ledger totals replay from it."""

    EVENTS = ("issued", "annotated", "aggregated", "voided", "accepted", "wasted", "ambiguous")

    def __init__(self):
        self.events: list[dict] = []

    def record(self, event: str, **payload) -> None:
        if event not in self.EVENTS:
            raise ValueError(f"unknown event {event!r}")
        self.events.append({"event": event, **payload})

    def snapshot(self) -> CostLedger:
        return replay_ledger(self.events)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "LedgerEventLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log.events.append(json.loads(line))
        return log


def replay_ledger(events: Iterable[dict]) -> CostLedger:
    spend = 0.0
    issued = accepted = wasted = ambiguous = voided = 0
    for ev in events:
        kind = ev["event"]
        if kind == "issued":
            issued += 1
            spend += float(ev.get("unit_cost", 0.0))
        elif kind == "accepted":
            accepted += 1
        elif kind == "wasted":
            wasted += 1
        elif kind == "ambiguous":
            ambiguous += 1
        elif kind == "voided":
            voided += 1
    return CostLedger(
        total_spend=round(spend, 10),
        surveys_issued=issued,
        accepted_labels=accepted,
        wasted_requests=wasted,
        ambiguous=ambiguous,
        voided=voided,
        cost_per_accepted=(spend / accepted) if accepted else None,
    )


def ledger_report(log: LedgerEventLog) -> CostLedger:
    return log.snapshot()


# --------------------------------------------------------- orchestration


@dataclass
class LabelingResult:
    label: Optional[SegmentLabel]
    outcome: AggregationOutcome
    attempts: int


def label_segment(
    segment: Segment,
    category: DataCategory,
    source: AnnotatorSource,
    ledger: LedgerEventLog,
    survey_id: str,
    relabel_policy: RelabelPolicy = RelabelPolicy.LABEL_AND_DISCARD,
    acceptance_threshold: float = DEFAULT_ACCEPTANCE_THRESHOLD,
    annotators_per_survey: int = DEFAULT_ANNOTATORS_PER_SURVEY,
    unit_cost: float = DEFAULT_UNIT_COST,
    max_void_republishes: int = 3,
) -> LabelingResult:
    """Run one segment through the survey / aggregation / relabel pipeline.

    Honesty violations void the batch and republish the survey (same attempt,
    annotators still paid). Never issues more than 15 annotations across the
    3 relabeling attempts.
    """
    pooled: list[Annotation] = []
    attempt = 1
    republishes = 0
    while True:
        survey = Survey(
            survey_id=f"{survey_id}#a{attempt}r{republishes}",
            segment=segment,
            category=category,
            attempt=attempt,
            unit_cost=unit_cost,
        )
        ledger.record("issued", survey_id=survey.survey_id, unit_cost=unit_cost, attempt=attempt)
        batch = collect_annotations(survey, source, annotators_per_survey)
        for ann in batch:
            ledger.record("annotated", survey_id=survey.survey_id, annotator=ann.annotator_id)
        probe = aggregate(survey, batch, acceptance_threshold)
        if probe.voided:
            ledger.record("voided", survey_id=survey.survey_id)
            republishes += 1
            if republishes > max_void_republishes:
                ledger.record("wasted", survey_id=survey.survey_id, reason="chronic dishonesty")
                return LabelingResult(None, probe, attempt)
            continue
        # Pool honest annotations across attempts; re-key so they aggregate
        # together under the pooled outcome.
        pooled.extend(batch)
        pooled_survey = Survey(
            survey_id=survey.survey_id,
            segment=segment,
            category=category,
            attempt=attempt,
            unit_cost=unit_cost,
        )
        rekeyed = [
            Annotation(pooled_survey.survey_id, a.annotator_id, a.answers) for a in pooled
        ]
        outcome = aggregate(pooled_survey, rekeyed, acceptance_threshold)
        ledger.record(
            "aggregated",
            survey_id=survey.survey_id,
            pooled_count=outcome.pooled_count,
            min_agreement=outcome.min_agreement,
            accepted=outcome.accepted,
        )
        directive = apply_relabel_policy(outcome, relabel_policy, attempt)
        if directive.kind is DirectiveKind.ACCEPT:
            ledger.record("accepted", survey_id=survey.survey_id, attempt=attempt)
            return LabelingResult(outcome.label, outcome, attempt)
        if directive.kind is DirectiveKind.DISCARD_WASTED:
            ledger.record("wasted", survey_id=survey.survey_id, attempt=attempt)
            return LabelingResult(None, outcome, attempt)
        if directive.kind is DirectiveKind.MARK_AMBIGUOUS:
            ledger.record("ambiguous", survey_id=survey.survey_id, attempt=attempt)
            label = SegmentLabel(
                segment=segment.ref(),
                category=category,
                relevant=outcome.modal_answers.get(Q_RELEVANCE) == "yes",
                modes={
                    a: ActionMode(outcome.modal_answers[mode_question(a)]) for a in DataAction
                },
                provenance=Provenance.SYSTEM_AMBIGUOUS,
            )
            return LabelingResult(label, outcome, attempt)
        attempt += 1
