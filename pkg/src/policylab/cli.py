"""Command-line entry points: ingest, bootstrap, segment, run, report,
serve, and the kernel benchmark."""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml

from . import kernels
from .alengine import LoopConfig, Strategy, run_loop
from .analysis import corpus_stats, detect_conflicts, document_rollup
from .corpus import FilterConfig, RawDocument, ingest as ingest_docs, load_corpus
from .crowd import (
    GroundTruthStore,
    RelabelPolicy,
    ReplayAnnotatorSource,
    SimulatedAnnotatorSource,
)
from .embedding import load_vectors
from .labels import DataCategory, SegmentLabel
from .segmenter import segment_policy
from .textmodel import Featurizer, TextClassifier, TrainConfig


@click.group()
def main():
    """Privacy-policy labeling pipeline."""


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@main.command("ingest")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--metadata", type=click.Path(exists=True), default=None)
@click.option("--min-chars", default=500, show_default=True)
@click.option("--min-keyword-hits", default=2, show_default=True)
def ingest_cmd(corpus_dir, out, metadata, min_chars, min_keyword_hits):
    """Filter a corpus directory and write sentence-split policies."""
    docs = load_corpus(corpus_dir, metadata)
    config = FilterConfig(min_chars=min_chars, min_keyword_hits=min_keyword_hits)
    policies, rejected = ingest_docs(docs, config)
    _write_jsonl(
        Path(out),
        (
            {
                "doc_id": p.doc_id,
                "filter_trace": list(p.filter_trace),
                "sentences": [
                    {
                        "index": s.index,
                        "text": s.text,
                        "char_span": list(s.char_span),
                        "from_bullet": s.from_bullet,
                    }
                    for s in p.sentences
                ],
            }
            for p in policies
        ),
    )
    for doc_id, reason in rejected:
        click.echo(f"rejected {doc_id}: {reason}", err=True)
    click.echo(f"kept {len(policies)} / {len(docs)} documents -> {out}")


def _load_policies(corpus_dir, metadata=None):
    docs = load_corpus(corpus_dir, metadata)
    policies, _ = ingest_docs(docs)
    return policies


@main.command("segment")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--vectors", type=click.Path(exists=True), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--category", type=click.Choice([c.value for c in DataCategory]), required=True)
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--alpha", default=0.5, show_default=True)
@click.option("--tau-rel", default=0.5, show_default=True)
def segment_cmd(corpus, vectors, model_path, category, out, alpha, tau_rel):
    """Emit contextualized segments for one data category."""
    table = load_vectors(vectors)
    model = TextClassifier.load(model_path, table=table)
    cat = DataCategory(category)
    records = []
    for policy in _load_policies(corpus):
        for seg in segment_policy(policy, cat, model, table, alpha=alpha, tau_rel=tau_rel):
            records.append(seg.to_dict())
    _write_jsonl(Path(out), records)
    click.echo(f"wrote {len(records)} segments -> {out}")


def _build_source(kind: str, truth_path, seed: int, accuracy: float | None):
    truth = GroundTruthStore.from_jsonl(truth_path) if truth_path else GroundTruthStore()
    if kind == "replay":
        return ReplayAnnotatorSource(truth, seed=seed)
    if kind == "simulated":
        if accuracy is not None:
            return SimulatedAnnotatorSource(truth, accuracy=accuracy, seed=seed)
        return SimulatedAnnotatorSource(truth, seed=seed)
    raise click.UsageError(f"unsupported source {kind!r} here (live runs via `serve`)")


def _loop_config(raw: dict) -> LoopConfig:
    kwargs = dict(raw)
    if "category" in kwargs:
        kwargs["category"] = DataCategory(kwargs["category"])
    if "strategy" in kwargs:
        kwargs["strategy"] = Strategy(kwargs["strategy"])
    if "relabel_policy" in kwargs:
        kwargs["relabel_policy"] = RelabelPolicy(kwargs["relabel_policy"])
    if "train" in kwargs:
        kwargs["train"] = TrainConfig(**kwargs["train"])
    return LoopConfig(**kwargs)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--set", "overrides", multiple=True, help="override config keys, e.g. --set loop.max_iterations=5")
def run_cmd(config_path, overrides):
    """Run the active-learning loop from a YAML config."""
    with open(config_path, encoding="utf-8") as fh:
        config = yaml.safe_load(fh)
    for ov in overrides:
        key, _, value = ov.partition("=")
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(value)

    policies = _load_policies(config["corpus"], config.get("metadata"))
    table = load_vectors(config["vectors"])
    source = _build_source(
        config.get("source", "simulated"),
        config.get("truth"),
        int(config.get("seed", 0)),
        config.get("annotator_accuracy"),
    )
    loop_cfg = _loop_config(config.get("loop", {}))
    result = run_loop(policies, loop_cfg, source, table)

    out_dir = Path(config.get("out", "run-output"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out_dir / "trace.jsonl", result.trace)
    _write_jsonl(out_dir / "dataset.jsonl", (lab.to_dict() for lab in result.dataset))
    result.ledger.to_jsonl(out_dir / "events.jsonl")
    result.category_model.save(out_dir / "category_model.npz")
    for action, model in result.action_models.items():
        model.save(out_dir / f"action_model_{action.value}.npz")
    snap = result.ledger.snapshot()
    click.echo(
        f"{len(result.trace)} iterations, {snap.accepted_labels} accepted labels, "
        f"spend ${snap.total_spend:.2f} -> {out_dir}"
    )


@main.command("bootstrap")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--truth", type=click.Path(exists=True), required=True)
@click.option("--category", type=click.Choice([c.value for c in DataCategory]), required=True)
@click.option("--source", "source_kind", type=click.Choice(["simulated", "replay"]), default="replay")
@click.option("--size", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "-o", type=click.Path(), required=True)
def bootstrap_cmd(corpus, truth, category, source_kind, size, seed, out):
    """Collect the bootstrap label set for one Category Model."""
    from .alengine import bootstrap_category
    from .crowd import LedgerEventLog

    policies = _load_policies(corpus)
    source = _build_source(source_kind, truth, seed, None)
    ledger = LedgerEventLog()
    labels = bootstrap_category(
        policies, source, DataCategory(category), ledger, size=size, seed=seed
    )
    _write_jsonl(Path(out), (lab.to_dict() for lab in labels))
    snap = ledger.snapshot()
    click.echo(f"{len(labels)} bootstrap labels (spend ${snap.total_spend:.2f}) -> {out}")


@main.command("report")
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--metadata", type=click.Path(exists=True), default=None)
@click.option("--out", "-o", "out_dir", type=click.Path(), required=True)
def report_cmd(labels_path, metadata, out_dir):
    """Corpus statistics, conflicts, and document rollups as CSV + JSON."""
    labels = []
    with open(labels_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                labels.append(SegmentLabel.from_dict(json.loads(line)))
    meta = None
    if metadata:
        from .corpus import SourceMeta

        meta = {}
        with open(metadata, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    meta[rec["doc_id"]] = SourceMeta(
                        app_category=rec.get("app_category"),
                        downloads=rec.get("downloads"),
                        rating=rec.get("rating"),
                        review_count=rec.get("review_count"),
                    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    stats = corpus_stats(labels, meta)
    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2)
    with open(out / "per_category.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "count", "denial_pct"])
        for cat, row in stats["per_category"].items():
            writer.writerow([cat, row["count"], row["denial_pct"]])

    by_doc: dict[str, list[SegmentLabel]] = {}
    for lab in labels:
        by_doc.setdefault(lab.segment.doc_id, []).append(lab)
    conflict_rows = []
    rollup_rows = []
    for doc_id, doc_labels in sorted(by_doc.items()):
        for c in detect_conflicts(doc_labels):
            conflict_rows.append(
                {
                    "doc_id": c.doc_id,
                    "category": c.category.value,
                    "action": c.action.value,
                    "modes": sorted(m.value for m in c.modes),
                    "segments": [[s.first_index, s.last_index] for s in c.segments],
                    "note": c.note,
                }
            )
        rollup = document_rollup(doc_labels)
        for (cat, action), mode in rollup.items():
            if mode != "not_mentioned":
                rollup_rows.append(
                    {"doc_id": doc_id, "category": cat.value, "action": action.value, "mode": mode}
                )
    _write_jsonl(out / "conflicts.jsonl", conflict_rows)
    _write_jsonl(out / "rollup.jsonl", rollup_rows)
    click.echo(
        f"{len(labels)} labels, {len(conflict_rows)} conflicts, "
        f"{len(by_doc)} documents -> {out}"
    )


@main.command("serve")
@click.option("--segments", "segments_path", type=click.Path(exists=True), required=True)
@click.option("--category", type=click.Choice([c.value for c in DataCategory]), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--annotators-per-survey", default=5, show_default=True)
@click.option("--qualified", default=None, help="comma-separated annotator ids; default: anyone")
@click.option("--out", "-o", default="accepted_labels.jsonl", show_default=True)
def serve_cmd(segments_path, category, host, port, annotators_per_survey, qualified, out):
    """Serve the live annotation queue over a segment export."""
    import uvicorn

    from .segmenter import Segment
    from .service import AnnotationQueue, create_app, surveys_from_segments

    cat = DataCategory(category)
    segments = []
    with open(segments_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                segments.append(
                    Segment(
                        doc_id=rec["doc_id"],
                        category=DataCategory(rec["category"]),
                        first_index=rec["first_index"],
                        last_index=rec["last_index"],
                        seed_index=rec["seed_index"],
                        text=rec["text"],
                    )
                )

    out_path = Path(out)

    def on_complete(survey, outcome):
        if outcome.accepted and outcome.label is not None:
            with open(out_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(outcome.label.to_dict()) + "\n")

    queue = AnnotationQueue(
        annotators_per_survey=annotators_per_survey,
        qualified=set(qualified.split(",")) if qualified else None,
        on_complete=on_complete,
    )
    for survey in surveys_from_segments(segments, cat):
        queue.publish(survey)
    click.echo(f"serving {len(segments)} surveys on http://{host}:{port}")
    uvicorn.run(create_app(queue), host=host, port=port)


@main.command("bench")
@click.option("--samples", default=4000, show_default=True)
@click.option("--features", default=2**16, show_default=True)
@click.option("--classes", default=5, show_default=True)
@click.option("--nnz", default=30, show_default=True, help="nonzeros per sample")
@click.option("--epochs", default=5, show_default=True)
def bench_cmd(samples, features, classes, nnz, epochs):
    """Benchmark the numba training kernel against the numpy fallback."""
    rng = np.random.default_rng(0)
    indptr = np.arange(0, (samples + 1) * nnz, nnz, dtype=np.int64)
    indices = rng.integers(0, features, size=samples * nnz).astype(np.int64)
    values = rng.random(samples * nnz)
    labels = rng.integers(0, classes, size=samples).astype(np.int64)
    order = np.arange(samples, dtype=np.int64)

    def time_backend(fn, name):
        wt = np.zeros((features, classes))
        fn(wt, indptr, indices, values, labels, order, 0.1, 1e-4, 32)  # warmup / JIT
        wt = np.zeros((features, classes))
        start = time.perf_counter()
        for _ in range(epochs):
            loss = fn(wt, indptr, indices, values, labels, order, 0.1, 1e-4, 32)
        elapsed = time.perf_counter() - start
        click.echo(f"{name:>6}: {elapsed:.3f}s for {epochs} epochs (final loss {loss:.4f})")
        return elapsed

    t_np = time_backend(kernels.sgd_epoch_numpy, "numpy")
    if kernels.backend() == "numba":
        t_nb = time_backend(kernels.sgd_epoch, "numba")
        click.echo(f"speedup: {t_np / t_nb:.1f}x")
    else:
        click.echo("numba unavailable or disabled (POLICYLAB_NO_NUMBA); numpy only")


if __name__ == "__main__":
    sys.exit(main())
