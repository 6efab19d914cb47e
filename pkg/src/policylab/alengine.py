"""Pool-based active learning: query scoring, batch selection with
uncertainty-history pruning, bootstrap procedures, and the training loop."""

from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Policy, Sentence
from .crowd import (
    AnnotatorSource,
    LedgerEventLog,
    PoolExhaustedError,
    RelabelPolicy,
    label_segment,
    plan_requests,
)
from .embedding import WordVectorTable
from .labels import (
    IRRELEVANT_CLASS,
    MODE_TO_CLASS,
    RELEVANT_CLASS,
    DataAction,
    DataCategory,
    Provenance,
    SegmentLabel,
)
from .segmenter import Segment, segment_policy
from .textmodel import Featurizer, TextClassifier, TrainConfig, evaluate


class Strategy(str, Enum):
    UNCERTAINTY = "uncertainty"
    MARGIN = "margin"
    ENTROPY = "entropy"


def query_score(dist: np.ndarray, strategy: Strategy) -> float:
    """Informativeness of one predictive distribution; higher = query sooner.

    uncertainty = 1 - max P(y); margin = -(P(1st) - P(2nd)); entropy in nats.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0 or (dist < -1e-12).any() or abs(dist.sum() - 1.0) > 1e-6:
        raise ValueError(f"not a probability distribution: {dist}")
    if strategy is Strategy.UNCERTAINTY:
        return float(1.0 - dist.max())
    if strategy is Strategy.MARGIN:
        top2 = np.sort(dist)[-2:]
        return float(-(top2[1] - top2[0]))
    if strategy is Strategy.ENTROPY:
        nz = dist[dist > 0]
        return float(-(nz * np.log(nz)).sum())
    raise ValueError(f"unknown strategy {strategy}")


@dataclass
class PoolEntry:
    item: object
    text: str
    last_scores: deque = field(default_factory=lambda: deque(maxlen=3))
    pruned: bool = False


def make_pool(items: Sequence[tuple[object, str]], window: int = 3) -> list[PoolEntry]:
    return [PoolEntry(item, text, deque(maxlen=window)) for item, text in items]


def select_batch(
    pool: Sequence[PoolEntry],
    models,
    strategy: Strategy,
    k: int,
    tau_prune: float = 0.1,
    window: int = 3,
) -> list[PoolEntry]:
    """Score the unpruned pool, record score history, prune entries whose
    last ``window`` scores all sit below ``tau_prune``, and return the top-k
    (stable ties by pool order)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not isinstance(models, (list, tuple)):
        models = [models]
    active = [e for e in pool if not e.pruned]
    if not active:
        raise PoolExhaustedError("unlabeled pool exhausted")
    texts = [e.text for e in active]
    per_model = [m.predict_proba(texts) for m in models]
    scores = np.zeros(len(active))
    for probs in per_model:
        scores += np.array([query_score(p, strategy) for p in probs])
    scores /= len(per_model)
    for entry, s in zip(active, scores):
        if entry.last_scores.maxlen != window:
            entry.last_scores = deque(entry.last_scores, maxlen=window)
        entry.last_scores.append(float(s))
        if len(entry.last_scores) == window and all(v < tau_prune for v in entry.last_scores):
            entry.pruned = True
    ranked = np.argsort(-scores, kind="stable")
    picked = []
    for idx in ranked:
        if not active[idx].pruned:
            picked.append(active[idx])
        if len(picked) == k:
            break
    return picked


# -------------------------------------------------------------- bootstrap


def sentence_segment(policy: Policy, sentence: Sentence, category: DataCategory) -> Segment:
    """Wrap one sentence as a single-sentence segment for labeling."""
    return Segment(
        doc_id=policy.doc_id,
        category=category,
        first_index=sentence.index,
        last_index=sentence.index,
        seed_index=sentence.index,
        text=sentence.text,
    )


def bootstrap_category(
    policies: Sequence[Policy],
    source: AnnotatorSource,
    category: DataCategory,
    ledger: LedgerEventLog,
    size: int = 200,
    seed: int = 0,
    **labeling_kwargs,
) -> list[SegmentLabel]:
    """Initial labeled sentence set for one Category Model.

    Annotators first screen randomly ordered policies for any mention of the
    category; ``size`` sentences are then drawn at random from the screened-
    positive policies and sent through the labeling pipeline.
    """
    if size <= 0:
        raise ValueError("bootstrap size must be positive")
    if not policies:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(policies))
    positive = [
        policies[i]
        for i in order
        if source.screen_document(" ".join(s.text for s in policies[i].sentences), category)
    ]
    if not positive:
        raise ValueError(f"no policies screened positive for {category.value}")
    candidates = [(p, s) for p in positive for s in p.sentences]
    chosen = rng.choice(len(candidates), size=min(size, len(candidates)), replace=False)
    labels: list[SegmentLabel] = []
    for n, ci in enumerate(chosen):
        policy, sentence = candidates[ci]
        seg = sentence_segment(policy, sentence, category)
        result = label_segment(
            seg, category, source, ledger,
            survey_id=f"boot-cat-{category.value}-{n}", **labeling_kwargs,
        )
        if result.label is not None and result.label.trainable:
            labels.append(
                SegmentLabel(
                    segment=result.label.segment,
                    category=category,
                    relevant=result.label.relevant,
                    modes=result.label.modes,
                    provenance=Provenance.BOOTSTRAP,
                )
            )
    return labels


def bootstrap_action(
    segments: Iterable[Segment],
    source: AnnotatorSource,
    category: DataCategory,
    ledger: LedgerEventLog,
    min_per_mode: int = 20,
    **labeling_kwargs,
) -> list[SegmentLabel]:
    """Label segments until every (action, mode) cell has min_per_mode
    accepted labels; warns and returns the partial set when the stream runs
    out first."""
    if min_per_mode < 1:
        raise ValueError("min_per_mode must be >= 1")
    counts = {(a, m): 0 for a in DataAction for m in MODE_TO_CLASS}
    labels: list[SegmentLabel] = []
    for n, seg in enumerate(segments):
        if all(c >= min_per_mode for c in counts.values()):
            break
        result = label_segment(
            seg, category, source, ledger,
            survey_id=f"boot-act-{category.value}-{n}", **labeling_kwargs,
        )
        if result.label is None or not result.label.trainable:
            continue
        lab = SegmentLabel(
            segment=result.label.segment,
            category=category,
            relevant=result.label.relevant,
            modes=result.label.modes,
            provenance=Provenance.BOOTSTRAP,
        )
        labels.append(lab)
        for a in DataAction:
            counts[(a, lab.modes[a])] += 1
    if not all(c >= min_per_mode for c in counts.values()):
        short = [(a.value, m.value, c) for (a, m), c in counts.items() if c < min_per_mode]
        warnings.warn(f"action bootstrap quota unmet for cells: {short}", stacklevel=2)
    return labels


# --------------------------------------------------------------- the loop


@dataclass
class LoopConfig:
    category: DataCategory = DataCategory.CONTACT
    strategy: Strategy = Strategy.UNCERTAINTY
    batch_accept_target: int = 30
    acceptance_rate_estimate: float = 0.73
    acceptance_threshold: float = 0.8
    relabel_policy: RelabelPolicy = RelabelPolicy.LABEL_AND_DISCARD
    f1_switch: float = 0.85
    full_retrain_every: int = 10
    tau_prune: float = 0.1
    prune_window: int = 3
    bootstrap_category_size: int = 200
    bootstrap_min_per_mode: int = 20
    max_iterations: int = 20
    label_budget: Optional[int] = None
    unit_cost: float = 0.22
    annotators_per_survey: int = 5
    hash_dim: int = 2**18
    train: TrainConfig = field(default_factory=TrainConfig)
    incremental_epochs: int = 4
    validation_fraction: float = 0.2
    alpha: float = 0.5
    tau_rel: float = 0.5
    max_span: int = 8
    seed: int = 0

    def __post_init__(self):
        for name in ("acceptance_rate_estimate", "acceptance_threshold", "f1_switch"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name}={v} outside (0, 1]")
        for name in ("batch_accept_target", "full_retrain_every", "max_iterations", "prune_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class LoopResult:
    category_model: TextClassifier
    action_models: dict[DataAction, TextClassifier]
    dataset: list[SegmentLabel]
    ledger: LedgerEventLog
    trace: list[dict]


def _stratified_split(pairs: list[tuple[str, int]], frac: float, rng) -> tuple[list, list]:
    by_class: dict[int, list] = {}
    for p in pairs:
        by_class.setdefault(p[1], []).append(p)
    train, val = [], []
    for items in by_class.values():
        items = list(items)
        rng.shuffle(items)
        n_val = max(1, int(round(len(items) * frac))) if len(items) > 1 else 0
        val.extend(items[:n_val])
        train.extend(items[n_val:])
    return train, val


def _relevance_pair(label: SegmentLabel, text: str) -> tuple[str, int]:
    return (text, RELEVANT_CLASS if label.relevant else IRRELEVANT_CLASS)


def run_loop(
    policies: Sequence[Policy],
    config: LoopConfig,
    source: AnnotatorSource,
    table: WordVectorTable,
) -> LoopResult:
    """Full active-learning loop for one data category.

    Each iteration issues plan_requests(target, rate) surveys on the items
    picked by the prioritized model: the Category Model drives selection
    until its validation F1 reaches the switch threshold, after which the
    Action Models take priority (all models keep training on every accepted
    label either way). Models are updated incrementally between iterations
    and retrained from scratch every ``full_retrain_every`` iterations, at
    which point the corpus is re-segmented and the segment pool refreshed.
    """
    rng = np.random.default_rng(config.seed)
    ledger = LedgerEventLog()
    featurizer = Featurizer(hash_dim=config.hash_dim, table=table)
    labeling_kwargs = dict(
        relabel_policy=config.relabel_policy,
        acceptance_threshold=config.acceptance_threshold,
        annotators_per_survey=config.annotators_per_survey,
        unit_cost=config.unit_cost,
    )
    category = config.category

    # --- bootstrap the Category Model
    boot_labels = bootstrap_category(
        policies, source, category, ledger,
        size=config.bootstrap_category_size, seed=config.seed, **labeling_kwargs,
    )
    dataset: list[SegmentLabel] = list(boot_labels)
    text_by_key = {
        lab.segment.key(category): _lookup_text(policies, lab) for lab in boot_labels
    }
    rel_pairs = [_relevance_pair(lab, text_by_key[lab.segment.key(category)]) for lab in boot_labels]
    cat_train, cat_val = _stratified_split(rel_pairs, config.validation_fraction, rng)
    if not cat_train:
        raise ValueError("category bootstrap produced no training data")
    cat_model = TextClassifier(2, featurizer).fit(cat_train, config.train)

    # --- segment the corpus and bootstrap the Action Models
    def resegment() -> list[Segment]:
        segs: list[Segment] = []
        for policy in policies:
            segs.extend(
                segment_policy(
                    policy, category, cat_model, table,
                    alpha=config.alpha, tau_rel=config.tau_rel, max_span=config.max_span,
                )
            )
        return segs

    segments = resegment()
    act_boot = bootstrap_action(
        iter(segments), source, category, ledger,
        min_per_mode=config.bootstrap_min_per_mode, **labeling_kwargs,
    )
    dataset.extend(act_boot)
    labeled_keys = {lab.segment.key(category) for lab in dataset}
    act_pairs: dict[DataAction, list[tuple[str, int]]] = {a: [] for a in DataAction}
    seg_text = {s.ref().key(category): s.text for s in segments}
    for lab in act_boot:
        text = seg_text.get(lab.segment.key(category), "")
        for a in DataAction:
            act_pairs[a].append((text, MODE_TO_CLASS[lab.modes[a]]))
    action_models: dict[DataAction, TextClassifier] = {}
    for a in DataAction:
        model = TextClassifier(5, featurizer)
        if act_pairs[a]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model.fit(act_pairs[a], config.train)
        action_models[a] = model

    # --- pools
    sent_pool = make_pool(
        [
            (sentence_segment(p, s, category), s.text)
            for p in policies
            for s in p.sentences
            if (p.doc_id, category.value, s.index, s.index) not in labeled_keys
        ],
        window=config.prune_window,
    )
    seg_pool = make_pool(
        [(s, s.text) for s in segments if s.ref().key(category) not in labeled_keys],
        window=config.prune_window,
    )

    trace: list[dict] = []
    accepted_total = 0
    survey_seq = 0
    for iteration in range(1, config.max_iterations + 1):
        f1_val = evaluate(cat_model, cat_val, 2).balanced_f1 if cat_val else 1.0
        selection = "category" if f1_val < config.f1_switch else "action"
        n_surveys = plan_requests(config.batch_accept_target, config.acceptance_rate_estimate)
        pool = sent_pool if selection == "category" else seg_pool
        models = cat_model if selection == "category" else list(action_models.values())
        try:
            batch = select_batch(
                pool, models, config.strategy, n_surveys,
                tau_prune=config.tau_prune, window=config.prune_window,
            )
        except PoolExhaustedError:
            break

        new_rel: list[tuple[str, int]] = []
        new_act: dict[DataAction, list[tuple[str, int]]] = {a: [] for a in DataAction}
        accepted = wasted = 0
        spend_before = ledger.snapshot().total_spend
        for entry in batch:
            seg: Segment = entry.item  # sentence pools hold 1-sentence segments
            survey_seq += 1
            result = label_segment(
                seg, category, source, ledger,
                survey_id=f"loop-{category.value}-{survey_seq}", **labeling_kwargs,
            )
            pool.remove(entry)
            if result.label is None:
                wasted += 1
                continue
            if not result.label.trainable:
                dataset.append(result.label)
                continue
            accepted += 1
            dataset.append(result.label)
            labeled_keys.add(result.label.segment.key(category))
            new_rel.append(_relevance_pair(result.label, seg.text))
            if selection == "action":
                for a in DataAction:
                    new_act[a].append((seg.text, MODE_TO_CLASS[result.label.modes[a]]))
        accepted_total += accepted
        cat_train.extend(new_rel)
        for a in DataAction:
            act_pairs[a].extend(new_act[a])

        retrain = iteration % config.full_retrain_every == 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if retrain:
                cat_model = TextClassifier(2, featurizer).fit(cat_train, config.train)
                for a in DataAction:
                    model = TextClassifier(5, featurizer)
                    if act_pairs[a]:
                        model.fit(act_pairs[a], config.train)
                    action_models[a] = model
                segments = resegment()
                seg_pool = make_pool(
                    [(s, s.text) for s in segments if s.ref().key(category) not in labeled_keys],
                    window=config.prune_window,
                )
            else:
                if new_rel:
                    cat_model.partial_fit(new_rel, config.incremental_epochs, config.train)
                for a in DataAction:
                    if new_act[a]:
                        action_models[a].partial_fit(new_act[a], config.incremental_epochs, config.train)

        counts = np.bincount([y for _, y in cat_train], minlength=2)
        minority_frac = float(counts.min() / counts.sum()) if counts.sum() else 0.0
        snap = ledger.snapshot()
        trace.append(
            {
                "iter": iteration,
                "model": selection,
                "f1_val": round(f1_val, 6),
                "minority_frac": round(minority_frac, 6),
                "accepted": accepted,
                "wasted": wasted,
                "spend": round(snap.total_spend - spend_before, 10),
                "full_retrain": retrain,
            }
        )
        if config.label_budget is not None and accepted_total >= config.label_budget:
            break

    return LoopResult(cat_model, action_models, dataset, ledger, trace)


def _lookup_text(policies: Sequence[Policy], label: SegmentLabel) -> str:
    for p in policies:
        if p.doc_id == label.segment.doc_id:
            return " ".join(
                p.sentences[i].text
                for i in range(label.segment.first_index, label.segment.last_index + 1)
            )
    raise KeyError(label.segment.doc_id)
