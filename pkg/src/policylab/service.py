"""HTTP annotation queue: exposes pending surveys to live annotators.

The queue is a single serialized state machine; every mutation happens
under one lock, so concurrent clients can never lose an annotation or
double-fire aggregation. A survey is pending (no annotations), in-flight
(some but fewer than n), or completed (aggregated) - exactly one of the
three.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response

from .crowd import (
    ALL_QUESTIONS,
    DEFAULT_ANNOTATORS_PER_SURVEY,
    QUESTION_OPTIONS,
    AggregationOutcome,
    Annotation,
    AnnotatorSource,
    LedgerEventLog,
    Survey,
    aggregate,
)
from .labels import DataCategory
from .segmenter import Segment


class QueueError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def survey_payload(survey: Survey, answered: int, needed: int) -> dict:
    return {
        "survey_id": survey.survey_id,
        "segment": {
            "id": f"{survey.segment.doc_id}:{survey.segment.first_index}-{survey.segment.last_index}",
            "doc_id": survey.segment.doc_id,
            "text": survey.segment.text,
        },
        "category": survey.category.value,
        "attempt": survey.attempt,
        "unit_cost": survey.unit_cost,
        "questions": [
            {"id": q, "options": list(QUESTION_OPTIONS[q])} for q in ALL_QUESTIONS
        ],
        "answered": answered,
        "needed": needed,
    }


class AnnotationQueue:
    """Survey queue with the no-repeat rule and atomic aggregation."""

    def __init__(
        self,
        annotators_per_survey: int = DEFAULT_ANNOTATORS_PER_SURVEY,
        acceptance_threshold: float = 0.8,
        qualified: Optional[set[str]] = None,
        on_complete: Optional[Callable[[Survey, AggregationOutcome], None]] = None,
        ledger: Optional[LedgerEventLog] = None,
    ):
        self.n = annotators_per_survey
        self.acceptance_threshold = acceptance_threshold
        self.qualified = qualified
        self.on_complete = on_complete
        self.ledger = ledger or LedgerEventLog()
        self._lock = threading.Condition()
        self._surveys: dict[str, Survey] = {}
        self._order: list[str] = []
        self._annotations: dict[str, list[Annotation]] = {}
        self._answered: dict[str, set[str]] = {}
        self._outcomes: dict[str, AggregationOutcome] = {}

    # ----------------------------------------------------------- mutation

    def publish(self, survey: Survey) -> None:
        with self._lock:
            if survey.survey_id in self._surveys:
                raise QueueError(400, "survey already published")
            self._surveys[survey.survey_id] = survey
            self._order.append(survey.survey_id)
            self._annotations[survey.survey_id] = []
            self._answered.setdefault(survey.survey_id, set())
            self.ledger.record(
                "issued", survey_id=survey.survey_id, unit_cost=survey.unit_cost,
                attempt=survey.attempt,
            )
            self._lock.notify_all()

    def _check_annotator(self, annotator_id: str) -> None:
        if not annotator_id:
            raise QueueError(403, "annotator id required")
        if self.qualified is not None and annotator_id not in self.qualified:
            raise QueueError(403, f"annotator {annotator_id!r} not qualified")

    def next_survey(self, annotator_id: str) -> Optional[dict]:
        with self._lock:
            self._check_annotator(annotator_id)
            for sid in self._order:
                if sid in self._outcomes:
                    continue
                if annotator_id in self._answered[sid]:
                    continue
                return survey_payload(
                    self._surveys[sid], len(self._annotations[sid]), self.n
                )
            return None

    def submit(self, annotator_id: str, survey_id: str, answers: dict) -> dict:
        with self._lock:
            self._check_annotator(annotator_id)
            survey = self._surveys.get(survey_id)
            if survey is None:
                raise QueueError(400, f"unknown survey {survey_id!r}")
            if survey_id in self._outcomes:
                raise QueueError(409, "survey already completed")
            if annotator_id in self._answered[survey_id]:
                raise QueueError(409, "duplicate submission")
            try:
                annotation = Annotation(survey_id, annotator_id, dict(answers))
            except ValueError as exc:
                raise QueueError(400, str(exc)) from exc
            self._annotations[survey_id].append(annotation)
            self._answered[survey_id].add(annotator_id)
            self.ledger.record("annotated", survey_id=survey_id, annotator=annotator_id)
            completed = False
            if len(self._annotations[survey_id]) >= self.n:
                outcome = aggregate(survey, self._annotations[survey_id], self.acceptance_threshold)
                self._outcomes[survey_id] = outcome
                self.ledger.record(
                    "aggregated", survey_id=survey_id,
                    pooled_count=outcome.pooled_count, accepted=outcome.accepted,
                )
                if outcome.voided:
                    self.ledger.record("voided", survey_id=survey_id)
                elif outcome.accepted:
                    self.ledger.record("accepted", survey_id=survey_id)
                else:
                    self.ledger.record("wasted", survey_id=survey_id)
                completed = True
                if self.on_complete is not None:
                    self.on_complete(survey, outcome)
                self._lock.notify_all()
            return {"status": "accepted", "completed": completed}

    # ------------------------------------------------------------- views

    def outcome(self, survey_id: str, timeout: Optional[float] = None) -> Optional[AggregationOutcome]:
        """Blocks until the survey completes (used by the live source)."""
        deadline = None if timeout is None else threading.TIMEOUT_MAX
        with self._lock:
            while survey_id not in self._outcomes:
                if not self._lock.wait(timeout=timeout if timeout is not None else deadline):
                    return None
            return self._outcomes[survey_id]

    def segment(self, segment_id: str) -> Optional[dict]:
        with self._lock:
            for survey in self._surveys.values():
                seg = survey.segment
                if f"{seg.doc_id}:{seg.first_index}-{seg.last_index}" == segment_id:
                    return seg.to_dict()
            return None

    def metrics(self) -> dict:
        with self._lock:
            pending = sum(
                1 for sid in self._order
                if sid not in self._outcomes and not self._annotations[sid]
            )
            in_flight = sum(
                1 for sid in self._order
                if sid not in self._outcomes and self._annotations[sid]
            )
            snap = self.ledger.snapshot()
            return {
                "pending": pending,
                "in_flight": in_flight,
                "completed": len(self._outcomes),
                "ledger": {
                    "total_spend": snap.total_spend,
                    "surveys_issued": snap.surveys_issued,
                    "accepted_labels": snap.accepted_labels,
                    "wasted_requests": snap.wasted_requests,
                    "ambiguous": snap.ambiguous,
                    "voided": snap.voided,
                    "cost_per_accepted": snap.cost_per_accepted,
                },
            }


class LiveQueueSource(AnnotatorSource):
    """AnnotatorSource backed by the HTTP queue: publishing a survey and
    blocking until human annotators provide the full batch. Pauses the AL
    loop until the queue drains, preserving iteration semantics."""

    def __init__(self, queue: AnnotationQueue, timeout: Optional[float] = None):
        super().__init__(pool_size=0)
        self.queue = queue
        self.timeout = timeout

    def answer(self, survey: Survey, annotator: int) -> dict:  # pragma: no cover
        raise NotImplementedError("live annotators answer over HTTP")

    def collect(self, survey: Survey, n: int):
        self.queue.publish(survey)
        outcome = self.queue.outcome(survey.survey_id, timeout=self.timeout)
        if outcome is None:
            raise TimeoutError(f"survey {survey.survey_id} not completed in time")
        return list(self.queue._annotations[survey.survey_id])


def create_app(queue: AnnotationQueue, metrics_extra: Optional[Callable[[], dict]] = None) -> FastAPI:
    app = FastAPI(title="policylab annotation queue")

    @app.get("/api/surveys/next")
    def next_survey(annotator: str = ""):
        try:
            payload = queue.next_survey(annotator)
        except QueueError as exc:
            return JSONResponse({"detail": exc.detail}, status_code=exc.status)
        if payload is None:
            return Response(status_code=204, headers={"Retry-After": "5"})
        return payload

    @app.post("/api/surveys/{survey_id}/annotations")
    def submit(survey_id: str, body: dict):
        annotator = body.get("annotator", "")
        answers = body.get("answers", {})
        try:
            return queue.submit(annotator, survey_id, answers)
        except QueueError as exc:
            return JSONResponse({"detail": exc.detail}, status_code=exc.status)

    @app.get("/api/metrics")
    def metrics():
        data = queue.metrics()
        if metrics_extra is not None:
            data.update(metrics_extra())
        return data

    @app.get("/api/segments/{segment_id}")
    def segment(segment_id: str):
        seg = queue.segment(segment_id)
        if seg is None:
            return JSONResponse({"detail": "unknown segment"}, status_code=404)
        return seg

    return app


def surveys_from_segments(
    segments: list[Segment], category: DataCategory, unit_cost: float = 0.22
) -> list[Survey]:
    return [
        Survey(
            survey_id=f"live-{i}",
            segment=seg,
            category=category,
            unit_cost=unit_cost,
        )
        for i, seg in enumerate(segments)
    ]
