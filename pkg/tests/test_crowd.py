import itertools
import math

import pytest

from policylab.crowd import (
    AggregationOutcome,
    AmbiguitySource,
    Annotation,
    CostLedger,
    DeterministicDisagreementSource,
    Directive,
    DirectiveKind,
    GroundTruthStore,
    LedgerEventLog,
    PoolExhaustedError,
    Q_HONESTY,
    Q_RELEVANCE,
    RelabelPolicy,
    ReplayAnnotatorSource,
    SimulatedAnnotatorSource,
    Survey,
    aggregate,
    apply_relabel_policy,
    label_segment,
    mode_question,
    plan_requests,
    replay_ledger,
)
from policylab.labels import ActionMode, DataAction, DataCategory, Provenance, SegmentRef
from policylab.segmenter import Segment

from oracles import brute_force_accept

CAT = DataCategory.LOCATION


def make_segment(doc_id="doc", first=0, last=1):
    return Segment(doc_id, CAT, first, last, first, "we collect your location data")


def make_survey(survey_id="s1", attempt=1):
    return Survey(survey_id=survey_id, segment=make_segment(), category=CAT, attempt=attempt)


def make_annotations(survey, answer_sets):
    """One annotation per answer set; unspecified questions default to a
    unanimous baseline."""
    base = {
        Q_RELEVANCE: "yes",
        mode_question(DataAction.COLLECT_USE): "assert",
        mode_question(DataAction.SHARE): "not_mentioned",
        mode_question(DataAction.STORE): "not_mentioned",
        Q_HONESTY: "yes",
    }
    anns = []
    for i, overrides in enumerate(answer_sets):
        answers = dict(base)
        answers.update(overrides)
        anns.append(Annotation(survey.survey_id, f"ann-{i}", answers))
    return anns


def truth_label(relevant=True, seg=None):
    seg = seg or make_segment()
    modes = {
        DataAction.COLLECT_USE: ActionMode.ASSERT,
        DataAction.SHARE: ActionMode.NOT_MENTIONED,
        DataAction.STORE: ActionMode.NOT_MENTIONED,
    }
    from policylab.labels import SegmentLabel

    return SegmentLabel(
        segment=seg.ref(), category=CAT, relevant=relevant, modes=modes
    )


class TestAnnotationValidation:
    def test_missing_question_rejected(self):
        with pytest.raises(ValueError, match="incomplete"):
            Annotation("s", "a", {Q_RELEVANCE: "yes"})

    def test_invalid_option_rejected(self):
        survey = make_survey()
        with pytest.raises(ValueError, match="invalid answer"):
            make_annotations(survey, [{Q_RELEVANCE: "maybe"}])

    def test_attempt_bounds(self):
        with pytest.raises(ValueError):
            make_survey(attempt=0)
        with pytest.raises(ValueError):
            make_survey(attempt=4)


class TestAggregate:
    def test_unanimous_accepts(self):
        survey = make_survey()
        outcome = aggregate(survey, make_annotations(survey, [{}] * 5))
        assert outcome.accepted
        assert not outcome.voided
        assert outcome.min_agreement == 1.0
        assert outcome.label is not None
        assert outcome.label.relevant
        assert outcome.label.modes[DataAction.COLLECT_USE] is ActionMode.ASSERT

    def test_four_of_five_accepts(self):
        survey = make_survey()
        anns = make_annotations(survey, [{}] * 4 + [{Q_RELEVANCE: "no"}])
        outcome = aggregate(survey, anns)
        assert outcome.accepted
        assert outcome.agreements[Q_RELEVANCE] == pytest.approx(0.8)

    def test_three_of_five_rejects(self):
        survey = make_survey()
        anns = make_annotations(survey, [{}] * 3 + [{Q_RELEVANCE: "no"}] * 2)
        outcome = aggregate(survey, anns)
        assert not outcome.accepted
        assert outcome.agreements[Q_RELEVANCE] == pytest.approx(0.6)

    def test_acceptance_is_min_over_questions(self):
        survey = make_survey()
        q = mode_question(DataAction.SHARE)
        anns = make_annotations(survey, [{}] * 4 + [{q: "denial"}])
        assert aggregate(survey, anns).accepted
        anns = make_annotations(survey, [{}] * 3 + [{q: "denial"}] * 2)
        assert not aggregate(survey, anns).accepted

    def test_relevance_no_coerces_modes(self):
        survey = make_survey()
        anns = make_annotations(survey, [{Q_RELEVANCE: "no"}] * 5)
        outcome = aggregate(survey, anns)
        assert outcome.accepted
        assert not outcome.label.relevant
        assert all(m is ActionMode.NOT_MENTIONED for m in outcome.label.modes.values())

    def test_tie_cannot_pass(self):
        survey = make_survey()
        q = mode_question(DataAction.STORE)
        votes = ["assert"] * 2 + ["denial"] * 2 + ["choice"]
        anns = make_annotations(survey, [{q: v} for v in votes])
        outcome = aggregate(survey, anns)
        assert outcome.agreements[q] == pytest.approx(0.4)
        assert not outcome.accepted

    def test_single_dishonest_voids_batch(self):
        survey = make_survey()
        anns = make_annotations(survey, [{}] * 4 + [{Q_HONESTY: "no"}])
        outcome = aggregate(survey, anns)
        assert outcome.voided
        assert not outcome.accepted
        assert outcome.label is None

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="no annotations"):
            aggregate(make_survey(), [])

    def test_mismatched_survey_id_rejected(self):
        s1, s2 = make_survey("a"), make_survey("b")
        anns = make_annotations(s2, [{}] * 5)
        with pytest.raises(ValueError, match="belong"):
            aggregate(s1, anns)

    def test_duplicate_annotator_rejected(self):
        survey = make_survey()
        anns = make_annotations(survey, [{}] * 2)
        dup = [anns[0], Annotation(survey.survey_id, "ann-0", anns[1].answers)]
        with pytest.raises(ValueError, match="duplicate"):
            aggregate(survey, dup)

    @pytest.mark.parametrize("n,threshold", [(5, 0.8), (10, 0.8), (15, 0.8), (5, 0.6)])
    def test_matches_brute_force_on_relevance_votes(self, n, threshold):
        survey = make_survey()
        # every composition of yes/no votes of size n
        for yes in range(n + 1):
            votes = ["yes"] * yes + ["no"] * (n - yes)
            anns = make_annotations(survey, [{Q_RELEVANCE: v} for v in votes])
            outcome = aggregate(survey, anns, acceptance_threshold=threshold)
            assert outcome.accepted == brute_force_accept(votes, threshold)


class TestRelabelPolicy:
    def accepted_outcome(self, accepted):
        return AggregationOutcome(
            survey_id="s",
            modal_answers={},
            agreements={Q_RELEVANCE: 1.0 if accepted else 0.6},
            accepted=accepted,
            voided=False,
            pooled_count=5,
        )

    def test_accept_short_circuits(self):
        for attempt in (1, 2, 3):
            d = apply_relabel_policy(
                self.accepted_outcome(True), RelabelPolicy.INCREMENTAL, attempt
            )
            assert d.kind is DirectiveKind.ACCEPT

    def test_discard_policy_wastes_immediately(self):
        d = apply_relabel_policy(
            self.accepted_outcome(False), RelabelPolicy.LABEL_AND_DISCARD, 1
        )
        assert d.kind is DirectiveKind.DISCARD_WASTED

    def test_incremental_rerequests_five(self):
        for attempt in (1, 2):
            d = apply_relabel_policy(
                self.accepted_outcome(False), RelabelPolicy.INCREMENTAL, attempt
            )
            assert d == Directive(DirectiveKind.REREQUEST, n=5)

    def test_third_failure_marks_ambiguous(self):
        d = apply_relabel_policy(self.accepted_outcome(False), RelabelPolicy.INCREMENTAL, 3)
        assert d.kind is DirectiveKind.MARK_AMBIGUOUS

    def test_attempt_cap_enforced(self):
        with pytest.raises(ValueError):
            apply_relabel_policy(self.accepted_outcome(False), RelabelPolicy.INCREMENTAL, 4)


class TestPlanRequests:
    def test_reference_plan(self):
        assert plan_requests(30, 0.73) == 42

    def test_perfect_rate(self):
        assert plan_requests(30, 1.0) == 30

    def test_rounds_up(self):
        assert plan_requests(10, 0.3) == 34

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            plan_requests(10, 0.0)
        with pytest.raises(ValueError):
            plan_requests(10, 1.5)


class TestLedger:
    def test_reference_ledger_numbers(self):
        log = LedgerEventLog()
        for i in range(42):
            log.record("issued", survey_id=f"s{i}", unit_cost=0.22)
        for i in range(30):
            log.record("accepted", survey_id=f"s{i}")
        for i in range(30, 42):
            log.record("wasted", survey_id=f"s{i}")
        ledger = log.snapshot()
        assert ledger.total_spend == pytest.approx(9.24)
        assert ledger.surveys_issued == 42
        assert ledger.accepted_labels == 30
        assert ledger.wasted_requests == 12
        assert ledger.cost_per_accepted == pytest.approx(0.308)
        assert ledger.cost_per_accepted_label(5) == pytest.approx(1.54)

    def test_no_accepted_labels(self):
        log = LedgerEventLog()
        log.record("issued", survey_id="s", unit_cost=0.22)
        assert log.snapshot().cost_per_accepted is None
        assert log.snapshot().cost_per_accepted_label() is None

    def test_unknown_event_rejected(self):
        with pytest.raises(ValueError):
            LedgerEventLog().record("refunded")

    def test_jsonl_roundtrip_replays_identically(self, tmp_path):
        log = LedgerEventLog()
        log.record("issued", survey_id="a", unit_cost=0.19)
        log.record("voided", survey_id="a")
        log.record("issued", survey_id="a", unit_cost=0.19)
        log.record("accepted", survey_id="a")
        path = tmp_path / "events.jsonl"
        log.to_jsonl(path)
        reloaded = LedgerEventLog.from_jsonl(path)
        assert reloaded.snapshot() == log.snapshot()
        assert reloaded.snapshot() == replay_ledger(log.events)

    def test_voided_spend_stays_on_ledger(self):
        log = LedgerEventLog()
        log.record("issued", survey_id="a", unit_cost=0.22)
        log.record("voided", survey_id="a")
        log.record("issued", survey_id="a", unit_cost=0.22)
        log.record("accepted", survey_id="a")
        ledger = log.snapshot()
        assert ledger.total_spend == pytest.approx(0.44)
        assert ledger.voided == 1
        assert ledger.cost_per_accepted == pytest.approx(0.44)


class TestGroundTruthStore:
    def test_exact_lookup(self):
        lab = truth_label()
        store = GroundTruthStore([lab])
        assert store.lookup(make_segment(), CAT) == lab

    def test_overlap_fallback(self):
        lab = truth_label()
        store = GroundTruthStore([lab])
        shifted = Segment("doc", CAT, 1, 3, 1, "shifted span")
        assert store.lookup(shifted, CAT) == lab

    def test_unknown_segment_reads_irrelevant(self):
        store = GroundTruthStore([truth_label()])
        other = Segment("other-doc", CAT, 0, 1, 0, "different document")
        got = store.lookup(other, CAT)
        assert not got.relevant

    def test_jsonl_roundtrip(self, tmp_path):
        store = GroundTruthStore([truth_label()])
        path = tmp_path / "truth.jsonl"
        store.to_jsonl(path)
        reloaded = GroundTruthStore.from_jsonl(path)
        assert len(reloaded) == 1
        assert reloaded.lookup(make_segment(), CAT) == truth_label()

    def test_correct_answers_shape(self):
        store = GroundTruthStore([truth_label()])
        answers = store.correct_answers(make_survey())
        assert answers[Q_RELEVANCE] == "yes"
        assert answers[mode_question(DataAction.COLLECT_USE)] == "assert"
        assert Q_HONESTY not in answers


class TestAnnotatorSources:
    def test_no_repeat_across_attempts(self):
        store = GroundTruthStore([truth_label()])
        src = ReplayAnnotatorSource(store, pool_size=20)
        first = src.fresh_annotators("seg-1#a1r0", 5)
        second = src.fresh_annotators("seg-1#a2r0", 5)
        third = src.fresh_annotators("seg-1#a3r0", 5)
        assert not (set(first) & set(second) | set(first) & set(third) | set(second) & set(third))

    def test_different_surveys_can_reuse_annotators(self):
        store = GroundTruthStore([truth_label()])
        src = ReplayAnnotatorSource(store, pool_size=5)
        a = src.fresh_annotators("seg-1", 5)
        b = src.fresh_annotators("seg-2", 5)
        assert set(a) == set(b)

    def test_pool_exhaustion(self):
        store = GroundTruthStore([truth_label()])
        src = ReplayAnnotatorSource(store, pool_size=7)
        src.fresh_annotators("seg-1", 5)
        with pytest.raises(PoolExhaustedError):
            src.fresh_annotators("seg-1#a2r0", 5)

    def test_replay_source_answers_truth(self):
        store = GroundTruthStore([truth_label()])
        src = ReplayAnnotatorSource(store, pool_size=10)
        survey = make_survey()
        anns = src.collect(survey, 5)
        outcome = aggregate(survey, anns)
        assert outcome.accepted
        assert outcome.min_agreement == 1.0

    def test_simulated_accuracy_zero_never_correct(self):
        store = GroundTruthStore([truth_label()])
        src = SimulatedAnnotatorSource(store, pool_size=10, accuracy=0.0, seed=1)
        correct = store.correct_answers(make_survey())
        answers = src.answer(make_survey(), 0)
        assert all(answers[q] != correct[q] for q in correct)

    def test_deterministic_disagreement_never_recovers(self):
        store = GroundTruthStore([truth_label()])
        src = DeterministicDisagreementSource(store, pool_size=100, agree_of_5=3)
        log = LedgerEventLog()
        result = label_segment(
            make_segment(), CAT, src, log, "seg-1", relabel_policy=RelabelPolicy.INCREMENTAL
        )
        assert result.attempts == 3
        assert result.label is not None
        assert result.label.provenance is Provenance.SYSTEM_AMBIGUOUS
        assert not result.label.trainable
        # pooled agreement stayed 3/5 -> 6/10 -> 9/15 = 0.6 at every attempt
        aggs = [e for e in log.events if e["event"] == "aggregated"]
        assert [e["pooled_count"] for e in aggs] == [5, 10, 15]
        assert all(e["min_agreement"] == pytest.approx(0.6) for e in aggs)


class TestLabelSegment:
    def truth_source(self, **kwargs):
        store = GroundTruthStore([truth_label()])
        return ReplayAnnotatorSource(store, **kwargs)

    def test_accepts_first_attempt(self):
        log = LedgerEventLog()
        result = label_segment(make_segment(), CAT, self.truth_source(pool_size=10), log, "s1")
        assert result.attempts == 1
        assert result.label.relevant
        ledger = log.snapshot()
        assert ledger.surveys_issued == 1
        assert ledger.accepted_labels == 1
        assert ledger.total_spend == pytest.approx(0.22)

    def test_discard_policy_stops_after_one_failure(self):
        store = GroundTruthStore([truth_label()])
        src = DeterministicDisagreementSource(store, pool_size=100)
        log = LedgerEventLog()
        result = label_segment(
            make_segment(), CAT, src, log, "s1", relabel_policy=RelabelPolicy.LABEL_AND_DISCARD
        )
        assert result.label is None
        assert result.attempts == 1
        ledger = log.snapshot()
        assert ledger.wasted_requests == 1
        assert ledger.surveys_issued == 1

    def test_dishonesty_voids_and_republishes(self):
        store = GroundTruthStore([truth_label()])

        class OneDishonest(ReplayAnnotatorSource):
            def answer(self, survey, annotator):
                answers = super().answer(survey, annotator)
                if annotator == 0:
                    answers[Q_HONESTY] = "no"
                return answers

        src = OneDishonest(store, pool_size=20)
        log = LedgerEventLog()
        result = label_segment(make_segment(), CAT, src, log, "s1")
        assert result.label is not None
        ledger = log.snapshot()
        assert ledger.voided == 1
        assert ledger.surveys_issued == 2
        assert ledger.total_spend == pytest.approx(0.44)
        # voided annotations were discarded, not pooled
        aggs = [e for e in log.events if e["event"] == "aggregated"]
        assert aggs[-1]["pooled_count"] == 5

    def test_chronic_dishonesty_wasted(self):
        store = GroundTruthStore([truth_label()])

        class AlwaysDishonest(ReplayAnnotatorSource):
            def answer(self, survey, annotator):
                answers = super().answer(survey, annotator)
                answers[Q_HONESTY] = "no"
                return answers

        src = AlwaysDishonest(store, pool_size=100)
        log = LedgerEventLog()
        result = label_segment(make_segment(), CAT, src, log, "s1")
        assert result.label is None
        ledger = log.snapshot()
        assert ledger.surveys_issued == 4  # original + 3 republishes
        assert ledger.voided == 4
        assert ledger.wasted_requests == 1

    def test_incremental_pools_across_attempts(self):
        store = GroundTruthStore([truth_label()])

        class NoisyFirstBatch(ReplayAnnotatorSource):
            """First 5 annotators disagree with truth on relevance; the rest
            answer perfectly, so pooling recovers at 8/10."""

            def answer(self, survey, annotator):
                answers = super().answer(survey, annotator)
                if annotator < 2:
                    answers[Q_RELEVANCE] = "no"
                return answers

        src = NoisyFirstBatch(store, pool_size=20)
        log = LedgerEventLog()
        result = label_segment(
            make_segment(), CAT, src, log, "s1", relabel_policy=RelabelPolicy.INCREMENTAL
        )
        assert result.attempts == 2
        assert result.label.relevant
        aggs = [e for e in log.events if e["event"] == "aggregated"]
        assert [e["pooled_count"] for e in aggs] == [5, 10]
        assert aggs[-1]["min_agreement"] == pytest.approx(0.8)

    def test_never_exceeds_fifteen_annotations(self):
        store = GroundTruthStore([truth_label()])
        src = AmbiguitySource(pool_size=100, seed=5)
        log = LedgerEventLog()
        label_segment(
            make_segment(), CAT, src, log, "s1", relabel_policy=RelabelPolicy.INCREMENTAL
        )
        annotated = [e for e in log.events if e["event"] == "annotated"]
        assert len(annotated) <= 15
