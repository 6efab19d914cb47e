"""Experiments and reports: conflict detection, document rollup, active
learning savings, class-balance trajectories, acceptance-threshold sweep,
relabeling success rate, duplication baseline, and corpus statistics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import SourceMeta
from .crowd import (
    AnnotatorSource,
    GroundTruthStore,
    LedgerEventLog,
    RelabelPolicy,
    SimulatedAnnotatorSource,
    Survey,
    aggregate,
    collect_annotations,
    label_segment,
)
from .labels import (
    ActionMode,
    DataAction,
    DataCategory,
    SegmentLabel,
    SegmentRef,
)
from .segmenter import Segment
from .textmodel import Featurizer, TextClassifier, TrainConfig, evaluate

# Pairs of action modes that contradict each other within one document.
# Assert+choice is not a conflict (choice implies the action happens by
# default); ambiguous and not_mentioned conflict with nothing.
CONFLICT_PAIRS = (
    frozenset({ActionMode.ASSERT, ActionMode.DENIAL}),
    frozenset({ActionMode.CHOICE, ActionMode.DENIAL}),
)

ROLLUP_CONFLICTING = "conflicting"


@dataclass(frozen=True)
class Conflict:
    doc_id: str
    category: DataCategory
    action: DataAction
    modes: frozenset
    segments: tuple[SegmentRef, ...]
    note: str = ""


def _cell_modes(labels: Sequence[SegmentLabel]) -> dict[tuple[DataCategory, DataAction], list]:
    cells: dict[tuple[DataCategory, DataAction], list] = {}
    for lab in labels:
        if not lab.relevant:
            continue
        for action in DataAction:
            mode = lab.modes[action]
            if mode is ActionMode.NOT_MENTIONED:
                continue
            cells.setdefault((lab.category, action), []).append((mode, lab.segment))
    return cells


def detect_conflicts(labels: Sequence[SegmentLabel]) -> list[Conflict]:
    """Contradictory action modes within one document's labels."""
    doc_ids = {lab.segment.doc_id for lab in labels}
    if len(doc_ids) > 1:
        raise ValueError(f"labels span multiple documents: {sorted(doc_ids)}")
    conflicts = []
    for (category, action), entries in sorted(
        _cell_modes(labels).items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        modes = frozenset(m for m, _ in entries)
        if any(pair <= modes for pair in CONFLICT_PAIRS):
            conflicts.append(
                Conflict(
                    doc_id=next(iter(doc_ids)),
                    category=category,
                    action=action,
                    modes=modes,
                    segments=tuple(sorted({s for _, s in entries}, key=lambda r: r.first_index)),
                )
            )
    return conflicts


def document_rollup(labels: Sequence[SegmentLabel]) -> dict[tuple[DataCategory, DataAction], str]:
    """Consolidate one document's segment labels to a per-cell mode.

    Conflicting cells surface as "conflicting" rather than being resolved;
    assert+choice resolves to choice (the more specific disclosure) and a
    lone ambiguous mode stays ambiguous.
    """
    cells = _cell_modes(labels)
    rollup: dict[tuple[DataCategory, DataAction], str] = {}
    for category in DataCategory:
        for action in DataAction:
            entries = cells.get((category, action), [])
            modes = {m for m, _ in entries}
            if not modes:
                rollup[(category, action)] = ActionMode.NOT_MENTIONED.value
            elif any(pair <= modes for pair in CONFLICT_PAIRS):
                rollup[(category, action)] = ROLLUP_CONFLICTING
            else:
                concrete = modes - {ActionMode.AMBIGUOUS}
                if not concrete:
                    rollup[(category, action)] = ActionMode.AMBIGUOUS.value
                elif ActionMode.CHOICE in concrete:
                    rollup[(category, action)] = ActionMode.CHOICE.value
                else:
                    rollup[(category, action)] = next(iter(concrete)).value
    return rollup


# ----------------------------------------------------- synthetic fixtures


def synthetic_binary_corpus(
    n: int = 5000,
    minority_frac: float = 0.05,
    vocab_per_class: int | tuple[int, int] = 150,
    tokens_per_text: int = 8,
    seed: int = 0,
) -> list[tuple[str, int]]:
    """Separable imbalanced text corpus: each class draws its tokens from a
    disjoint vocabulary, so classification requires vocabulary coverage and
    random sampling starves the minority class.

    ``vocab_per_class`` may be a (majority, minority) pair; a minority
    vocabulary much larger than the majority one keeps minority samples
    uncertain long after the majority class saturates."""
    rng = np.random.default_rng(seed)
    if isinstance(vocab_per_class, int):
        vocab_sizes = (vocab_per_class, vocab_per_class)
    else:
        vocab_sizes = tuple(vocab_per_class)
    items = []
    n_min = int(round(n * minority_frac))
    for i in range(n):
        cls = 1 if i < n_min else 0
        prefix = "min" if cls == 1 else "maj"
        toks = rng.integers(0, vocab_sizes[cls], size=tokens_per_text)
        items.append((" ".join(f"{prefix}{t}" for t in toks), cls))
    perm = rng.permutation(n)
    return [items[i] for i in perm]


def make_survey_items(
    dataset: Sequence[tuple[str, int]],
    category: DataCategory = DataCategory.CONTACT,
    relevant_mode: ActionMode = ActionMode.ASSERT,
) -> tuple[list[Segment], GroundTruthStore]:
    """Wrap a binary (text, class) dataset as labelable segments with ground
    truth: class 1 -> relevant with the given mode on every action."""
    segments = []
    truth = GroundTruthStore()
    for i, (text, cls) in enumerate(dataset):
        seg = Segment(
            doc_id=f"synth-{i}", category=category,
            first_index=0, last_index=0, seed_index=0, text=text,
        )
        segments.append(seg)
        truth.add(
            SegmentLabel(
                segment=seg.ref(),
                category=category,
                relevant=cls == 1,
                modes={a: relevant_mode for a in DataAction},
            )
        )
    return segments, truth


# ------------------------------------------------------------ AL savings


@dataclass
class ArmTrace:
    n_labels: int
    reached_target: bool
    m_start: float
    m_end: float
    minority_curve: list[float]


@dataclass
class SavingsReport:
    n_nonAL: float
    n_AL: float
    al_save: float
    m_start: float
    m_end: float
    per_seed: list[dict] = field(default_factory=list)

    def consistent(self, tol: float = 1e-4) -> bool:
        if self.n_nonAL == 0:
            return self.al_save == 0.0
        return abs(self.al_save - (self.n_nonAL - self.n_AL) / self.n_nonAL) <= tol


@dataclass
class ExperimentConfig:
    bootstrap_size: int = 20
    batch_size: int = 20
    hash_dim: int = 2**14
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=32, learning_rate=0.5))
    max_labels: Optional[int] = None


def _minority_fraction(labels: Iterable[int]) -> float:
    arr = np.bincount(list(labels), minlength=2)
    return float(arr.min() / arr.sum()) if arr.sum() else 0.0


def run_selection_arm(
    pool: Sequence[tuple[str, int]],
    testset: Sequence[tuple[str, int]],
    target_f1: float,
    use_al: bool,
    seed: int,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> ArmTrace:
    """One selection arm: grow the labeled set from the pool (actively or at
    random, the oracle answering instantly) until balanced F1 on the test
    set reaches the target or the pool is exhausted."""
    rng = np.random.default_rng(seed)
    featurizer = Featurizer(hash_dim=cfg.hash_dim)
    remaining = list(range(len(pool)))
    rng.shuffle(remaining)
    labeled = remaining[: cfg.bootstrap_size]
    remaining = remaining[cfg.bootstrap_size :]
    m_start = _minority_fraction(pool[i][1] for i in labeled)
    curve = [m_start]
    max_labels = cfg.max_labels if cfg.max_labels is not None else len(pool)
    while True:
        model = TextClassifier(2, featurizer)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit([pool[i] for i in labeled], cfg.train)
        f1 = evaluate(model, testset, 2).balanced_f1
        m_now = _minority_fraction(pool[i][1] for i in labeled)
        if f1 >= target_f1:
            return ArmTrace(len(labeled), True, m_start, m_now, curve)
        if not remaining or len(labeled) >= max_labels:
            return ArmTrace(len(labeled), False, m_start, m_now, curve)
        if use_al:
            probs = model.predict_proba([pool[i][0] for i in remaining])
            scores = 1.0 - probs.max(axis=1)
            order = np.argsort(-scores, kind="stable")[: cfg.batch_size]
        else:
            order = rng.choice(len(remaining), size=min(cfg.batch_size, len(remaining)), replace=False)
        chosen = sorted(order, reverse=True)
        for idx in chosen:
            labeled.append(remaining[idx])
            del remaining[idx]
        curve.append(_minority_fraction(pool[i][1] for i in labeled))


def al_savings_experiment(
    pool: Sequence[tuple[str, int]],
    testset: Sequence[tuple[str, int]],
    target_f1: float = 0.85,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    cfg: ExperimentConfig = ExperimentConfig(),
) -> SavingsReport:
    """Labels-to-target comparison of random vs active selection."""
    per_seed = []
    for seed in seeds:
        al = run_selection_arm(pool, testset, target_f1, True, seed, cfg)
        rnd = run_selection_arm(pool, testset, target_f1, False, seed, cfg)
        per_seed.append(
            {
                "seed": seed,
                "n_AL": al.n_labels,
                "n_nonAL": rnd.n_labels,
                "al_reached": al.reached_target,
                "nonal_reached": rnd.reached_target,
                "m_start": al.m_start,
                "m_end": al.m_end,
            }
        )
    n_al = float(np.mean([r["n_AL"] for r in per_seed]))
    n_non = float(np.mean([r["n_nonAL"] for r in per_seed]))
    return SavingsReport(
        n_nonAL=n_non,
        n_AL=n_al,
        al_save=(n_non - n_al) / n_non if n_non else 0.0,
        m_start=float(np.mean([r["m_start"] for r in per_seed])),
        m_end=float(np.mean([r["m_end"] for r in per_seed])),
        per_seed=per_seed,
    )


def pool_size_experiment(
    items: Sequence[tuple[str, int]],
    testset: Sequence[tuple[str, int]],
    sizes: Sequence[int],
    label_budget: int,
    seed: int = 0,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> dict[int, list[float]]:
    """Minority-fraction trajectory of the active arm for each pool size.

    A pool too small exhausts its minority samples, after which the labeled
    set's minority share declines."""
    if sorted(sizes) != list(sizes)[::-1] and len(set(sizes)) != len(sizes):
        raise ValueError("pool sizes must be distinct")
    curves: dict[int, list[float]] = {}
    for size in sizes:
        if size > len(items):
            raise ValueError(f"pool size {size} exceeds fixture size {len(items)}")
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(items), size=size, replace=False)
        pool = [items[i] for i in idx]
        arm_cfg = ExperimentConfig(
            bootstrap_size=cfg.bootstrap_size,
            batch_size=cfg.batch_size,
            hash_dim=cfg.hash_dim,
            train=cfg.train,
            max_labels=label_budget,
        )
        trace = run_selection_arm(pool, testset, target_f1=2.0, use_al=True, seed=seed, cfg=arm_cfg)
        curves[size] = trace.minority_curve
    return curves


# --------------------------------------------------- acceptance threshold


def at_sweep(
    segments: Sequence[Segment],
    truth: GroundTruthStore,
    testset: Sequence[tuple[str, int]],
    thresholds: Sequence[float] = (0.6, 0.8, 1.0),
    annotator_accuracy: float = 0.8,
    seed: int = 0,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> list[dict]:
    """Apply several acceptance thresholds to the same annotation batches
    and report accepted counts, acceptance rates, and downstream relevance-
    model F1 per threshold."""
    source = SimulatedAnnotatorSource(truth, pool_size=len(segments) * 5 + 5,
                                      accuracy=annotator_accuracy, seed=seed)
    batches = []
    for i, seg in enumerate(segments):
        survey = Survey(survey_id=f"at-{i}", segment=seg, category=seg.category)
        batches.append((survey, collect_annotations(survey, source, 5)))
    results = []
    featurizer = Featurizer(hash_dim=cfg.hash_dim)
    for threshold in thresholds:
        accepted_pairs = []
        accepted = 0
        for survey, batch in batches:
            outcome = aggregate(survey, batch, threshold)
            if outcome.accepted and outcome.label is not None:
                accepted += 1
                accepted_pairs.append(
                    (survey.segment.text, 1 if outcome.label.relevant else 0)
                )
        f1 = None
        if accepted_pairs and len({y for _, y in accepted_pairs}) == 2:
            model = TextClassifier(2, featurizer)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model.fit(accepted_pairs, cfg.train)
            f1 = evaluate(model, testset, 2).balanced_f1
        results.append(
            {
                "threshold": threshold,
                "accepted": accepted,
                "acceptance_rate": accepted / len(batches) if batches else 0.0,
                "f1": f1,
            }
        )
    return results


def rsr_experiment(
    segments: Sequence[Segment],
    source: AnnotatorSource,
    category: DataCategory,
    acceptance_threshold: float = 0.8,
) -> dict:
    """Relabeling success rate: the fraction of surveys rejected at 4/5 that
    recover at the pooled 8/10 or 12/15 checks."""
    ledger = LedgerEventLog()
    rejected = recovered = 0
    for i, seg in enumerate(segments):
        result = label_segment(
            seg, category, source, ledger,
            survey_id=f"rsr-{i}",
            relabel_policy=RelabelPolicy.INCREMENTAL,
            acceptance_threshold=acceptance_threshold,
        )
        first_pass = result.attempts == 1 and result.outcome.accepted
        if first_pass:
            continue
        rejected += 1
        if result.outcome.accepted:
            recovered += 1
    return {
        "rejected_first_attempt": rejected,
        "recovered": recovered,
        "rsr": recovered / rejected if rejected else 0.0,
    }


# Paired (unit cost, acceptance rate) operating points spanning the observed
# ranges: cheaper pools tend to come with lower acceptance, so the sweep walks
# both together rather than crossing the extremes.
DEFAULT_COST_RATE_SWEEP = (
    (0.16, 0.70),
    (0.19, 0.73),
    (0.22, 0.80),
    (0.25, 0.85),
)


def cost_rate_sweep(
    pairs: Sequence[tuple[float, float]] = DEFAULT_COST_RATE_SWEEP,
    surveys: int = 1000,
    annotators_per_survey: int = 5,
) -> list[dict]:
    """Ledger-backed cost projection for each (unit cost, acceptance rate)
    operating point: issue ``surveys`` surveys, accept the expected share,
    and report the replayed per-label cost."""
    rows = []
    for unit_cost, rate in pairs:
        log = LedgerEventLog()
        accepted = int(round(surveys * rate))
        for i in range(surveys):
            log.record("issued", survey_id=f"sw-{i}", unit_cost=unit_cost)
            log.record("accepted" if i < accepted else "wasted", survey_id=f"sw-{i}")
        snap = log.snapshot()
        rows.append(
            {
                "unit_cost": unit_cost,
                "acceptance_rate": rate,
                "cost_per_accepted_label": snap.cost_per_accepted_label(annotators_per_survey),
            }
        )
    return rows


# ------------------------------------------------------------- balancing


def duplication_baseline(
    dataset: Sequence[tuple[str, int]], seed: int = 0
) -> list[tuple[str, int]]:
    """Balance a binary dataset by duplicating minority samples with
    replacement until class counts are equal."""
    counts = np.bincount([y for _, y in dataset], minlength=2)
    if counts.min() == 0:
        raise ValueError("minority class is empty")
    if counts[0] == counts[1]:
        return list(dataset)
    minority = int(counts.argmin())
    deficit = int(counts.max() - counts.min())
    minority_items = [p for p in dataset if p[1] == minority]
    rng = np.random.default_rng(seed)
    extra = [minority_items[i] for i in rng.integers(0, len(minority_items), size=deficit)]
    return list(dataset) + extra


# ----------------------------------------------------------- corpus stats

DOWNLOAD_BUCKETS = ((0, 10_000), (10_000, 1_000_000), (1_000_000, None))
RATING_BUCKETS = ((1.0, 3.0), (3.0, 4.0), (4.0, 5.01))


def _bucket(value, buckets):
    for lo, hi in buckets:
        if value >= lo and (hi is None or value < hi):
            return f"{lo}-{hi if hi is not None else 'inf'}"
    return None


def corpus_stats(
    labels: Sequence[SegmentLabel],
    metadata: Optional[dict[str, SourceMeta]] = None,
) -> dict:
    """Report tables over a labeled corpus.

    A label unit is one (segment, action) cell whose mode is not
    not_mentioned; the denial percentage is the share of those units with a
    denial mode. Popularity tables need the metadata join and are omitted
    with a warning when it is missing.
    """
    per_category: dict[str, dict] = {}
    units: list[tuple[SegmentLabel, DataAction, ActionMode]] = []
    for lab in labels:
        if not lab.relevant:
            continue
        for action in DataAction:
            mode = lab.modes[action]
            if mode is ActionMode.NOT_MENTIONED:
                continue
            units.append((lab, action, mode))
    for category in DataCategory:
        cat_units = [u for u in units if u[0].category is category]
        denials = sum(1 for _, _, m in cat_units if m is ActionMode.DENIAL)
        per_category[category.value] = {
            "count": len(cat_units),
            "denial_pct": round(100.0 * denials / len(cat_units), 2) if cat_units else None,
        }

    doc_ids = sorted({lab.segment.doc_id for lab in labels})
    n_docs = max(len(doc_ids), 1)
    per_action_mode: dict[str, dict[str, float]] = {}
    for action in DataAction:
        per_action_mode[action.value] = {}
        for mode in ActionMode:
            n = sum(1 for lab in labels if lab.relevant and lab.modes[action] is mode)
            per_action_mode[action.value][mode.value] = round(n / n_docs, 4)

    report = {
        "per_category": per_category,
        "labels_per_policy_by_action_mode": per_action_mode,
    }

    if metadata:
        by_downloads: dict[str, list[float]] = {}
        by_rating: dict[str, list[float]] = {}
        per_doc_denial: dict[str, float] = {}
        for doc in doc_ids:
            doc_units = [u for u in units if u[0].segment.doc_id == doc]
            if doc_units:
                per_doc_denial[doc] = sum(
                    1 for _, _, m in doc_units if m is ActionMode.DENIAL
                ) / len(doc_units)
        for doc, frac in per_doc_denial.items():
            meta = metadata.get(doc)
            if meta is None:
                continue
            if meta.downloads is not None:
                b = _bucket(meta.downloads, DOWNLOAD_BUCKETS)
                if b:
                    by_downloads.setdefault(b, []).append(frac)
            if meta.rating is not None:
                b = _bucket(meta.rating, RATING_BUCKETS)
                if b:
                    by_rating.setdefault(b, []).append(frac)
        report["denial_pct_by_downloads"] = {
            b: round(100.0 * float(np.mean(v)), 2) for b, v in sorted(by_downloads.items())
        }
        report["denial_pct_by_rating"] = {
            b: round(100.0 * float(np.mean(v)), 2) for b, v in sorted(by_rating.items())
        }
        app_cats = sorted({m.app_category for m in metadata.values() if m.app_category})
        table: dict[str, dict[str, float]] = {}
        for category in DataCategory:
            row = {}
            for app_cat in app_cats:
                docs = [d for d in doc_ids if metadata.get(d) and metadata[d].app_category == app_cat]
                if docs:
                    n = sum(
                        1 for u in units
                        if u[0].category is category and u[0].segment.doc_id in set(docs)
                    )
                    row[app_cat] = round(n / len(docs), 4)
            table[category.value] = row
        report["labels_per_policy_by_app_category"] = table
    else:
        warnings.warn("metadata missing: popularity tables omitted", stacklevel=2)
    return report
