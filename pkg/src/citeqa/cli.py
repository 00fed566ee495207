"""Command line interface: index, query, and evaluate."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .agents import Pipeline
from .config import (
    RunConfig,
    load_config_file,
    make_backends,
    make_embedding_provider,
    make_prompts,
    resolve_config,
)
from .corpus import load_corpus
from .errors import CiteQAError, ConfigError, IndexIOError
from .evaluation import evaluate_dataset, load_qa
from .report import format_summary_table, render_figures, write_report_jsonl
from .retrieval import (
    DenseIndex,
    SparseIndex,
    build_dense_index,
    build_manifest,
    build_sparse_index,
    corpus_sha256,
    load_dense_index,
    load_manifest,
    load_sparse_index,
    save_dense_index,
    save_manifest,
    save_sparse_index,
)
from .retrieval.persist import atomic_write_text

# Flag attribute -> override key understood by resolve_config.
_FLAG_MAP = {
    "corpus": "corpus",
    "qa": "qa",
    "out": "output_dir",
    "alpha": "alpha",
    "pool_size": "pool_size",
    "final_k": "final_k",
    "bm25_k1": "bm25_k1",
    "bm25_b": "bm25_b",
    "n_filter": "n_filter",
    "max_revision_rounds": "max_revision_rounds",
    "parallelism": "parallelism",
    "prompt_dir": "prompt_dir",
    "mock_script": "mock_script",
    "backend_url": "backend_url",
    "backend_model": "backend_model",
    "judge_url": "judge_url",
    "judge_model": "judge_model",
    "embed_kind": "embedding_kind",
    "embed_url": "embedding_url",
    "embed_dimension": "embedding_dimension",
}


@dataclass(frozen=True)
class IndexPaths:
    sparse: Path
    dense: Path
    manifest: Path


def _index_paths(out_dir: Path) -> IndexPaths:
    return IndexPaths(
        sparse=out_dir / "sparse_index.json",
        dense=out_dir / "dense_index.npz",
        manifest=out_dir / "index_manifest.json",
    )


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    payload = load_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {}
    for attr, key in _FLAG_MAP.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return resolve_config(payload, overrides)


def _require(value: str | None, flag: str) -> str:
    if not value:
        raise ConfigError(f"missing {flag} path: pass --{flag} or set {flag!r} in the config file")
    return value


def _write_config_snapshot(out_dir: Path, name: str, config: RunConfig) -> None:
    atomic_write_text(out_dir / name, json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def _load_indexes(config: RunConfig, corpus_path: str) -> tuple[SparseIndex, DenseIndex, dict]:
    out_dir = Path(config.output_dir)
    paths = _index_paths(out_dir)
    missing = [p.name for p in (paths.sparse, paths.dense, paths.manifest) if not p.exists()]
    if missing:
        raise IndexIOError(
            f"no index found in {out_dir} (missing {', '.join(missing)}); "
            f"build one with: citeqa index --corpus {corpus_path} --out {out_dir}"
        )
    manifest = load_manifest(paths.manifest)
    if manifest.get("corpus_sha256") != corpus_sha256(corpus_path):
        raise IndexIOError(
            f"the corpus file {corpus_path} does not match the index in {out_dir}; "
            f"rebuild with: citeqa index --corpus {corpus_path} --out {out_dir} --force"
        )
    embedding = manifest.get("embedding", {})
    if (
        embedding.get("kind") != config.embedding.kind
        or embedding.get("dimension") != config.embedding.dimension
    ):
        raise IndexIOError(
            f"the index in {out_dir} was built with embedding settings "
            f"{embedding.get('kind')}/{embedding.get('dimension')} but the current run uses "
            f"{config.embedding.kind}/{config.embedding.dimension}; rebuild the index or "
            "adjust the embedding settings"
        )
    return load_sparse_index(paths.sparse), load_dense_index(paths.dense), manifest


def _build_pipeline(config: RunConfig, corpus_path: str):
    store = load_corpus(corpus_path)
    sparse, dense, _ = _load_indexes(config, corpus_path)
    provider = make_embedding_provider(config)
    backend, judge_backend = make_backends(config)
    pipeline = Pipeline(
        store, sparse, dense, provider, backend, config.pipeline_config(), make_prompts(config)
    )
    return pipeline, judge_backend


# ---------------------------------------------------------------------------
# Commands


def cmd_index(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    corpus_path = _require(config.corpus_path, "corpus")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = load_corpus(corpus_path)
    provider = make_embedding_provider(config)
    sparse = build_sparse_index(store)
    dense = build_dense_index(store, provider)
    manifest = build_manifest(
        corpus_hash=corpus_sha256(corpus_path),
        doc_count=len(store),
        embedding_kind=config.embedding.kind,
        dimension=config.embedding.dimension,
        bm25_k1=config.bm25_k1,
        bm25_b=config.bm25_b,
    )
    paths = _index_paths(out_dir)
    if paths.manifest.exists():
        existing = load_manifest(paths.manifest)
        if existing != manifest and not args.force:
            raise ConfigError(
                f"an index built from different inputs already exists in {out_dir}; "
                "pass --force to overwrite it"
            )
    save_sparse_index(sparse, paths.sparse)
    save_dense_index(dense, paths.dense)
    save_manifest(manifest, paths.manifest)
    _write_config_snapshot(out_dir, "index_config.json", config)
    print(f"indexed {len(store)} documents into {out_dir}")
    print(f"  sparse: {paths.sparse.name} ({len(sparse.postings)} terms)")
    print(f"  dense:  {paths.dense.name} (dimension {dense.dimension})")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    corpus_path = _require(config.corpus_path, "corpus")
    pipeline, _ = _build_pipeline(config, corpus_path)
    output = pipeline.run(args.question)
    final = output.final_answer
    print(final.text)
    print()
    print("References:")
    for index, doc_id in sorted(final.references.items()):
        doc = pipeline.store.get(doc_id)
        title = f" ({doc.title})" if doc.title else ""
        print(f"  [{index}] {doc_id}{title}")
    if args.verbose:
        decision = output.filter_decision
        print()
        print(f"retrieved: {', '.join(output.first_stage.doc_ids())}")
        print(
            f"adjusted threshold: {decision.adjusted_tau:.6f} "
            f"(mean {decision.tau_q:.6f}, sigma {decision.sigma:.6f}, n {decision.n})"
        )
        print(f"retained: {', '.join(decision.retained)}")
        if decision.filtered:
            print(f"filtered out: {', '.join(decision.filtered)}")
        if output.completeness.degraded:
            print("completeness analysis degraded to a single whole-query component")
        if output.second_stage is not None:
            print(f"second stage: {', '.join(output.second_stage.doc_ids())}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    corpus_path = _require(config.corpus_path, "corpus")
    qa_path = _require(config.qa_path, "qa")
    pipeline, judge_backend = _build_pipeline(config, corpus_path)
    records = load_qa(qa_path)
    results, summary = evaluate_dataset(
        pipeline, records, judge_backend, parallelism=config.parallelism
    )
    out_dir = Path(config.output_dir)
    report_path = write_report_jsonl(out_dir / "report.jsonl", results, summary)
    figure_paths = render_figures(out_dir, summary)
    _write_config_snapshot(out_dir, "evaluate_config.json", config)
    print(format_summary_table(summary))
    print()
    print(f"report: {report_path}")
    for figure_path in figure_paths:
        print(f"figure: {figure_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_shared_flags(parser: argparse.ArgumentParser, *, qa: bool) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--corpus", help="corpus JSONL file")
    if qa:
        parser.add_argument("--qa", help="QA dataset JSONL file")
    parser.add_argument("--out", help="output directory for indexes and reports")
    parser.add_argument("--embed-kind", choices=("local", "http"), help="embedding provider kind")
    parser.add_argument("--embed-url", help="embedding service URL (kind http)")
    parser.add_argument("--embed-dimension", type=int, help="embedding dimension")
    parser.add_argument("--bm25-k1", type=float, help="BM25 k1 parameter")
    parser.add_argument("--bm25-b", type=float, help="BM25 b parameter")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, help="sparse weight in hybrid fusion")
    parser.add_argument("--pool-size", type=int, help="candidate pool per retriever")
    parser.add_argument("--final-k", type=int, help="documents kept after fusion")
    parser.add_argument("--n-filter", type=float, help="sigma multiplier for the dynamic filter")
    parser.add_argument("--max-revision-rounds", type=int, help="revision round limit")
    parser.add_argument("--parallelism", type=int, help="worker threads for agents and evaluation")
    parser.add_argument("--prompt-dir", help="directory of prompt template overrides")
    parser.add_argument("--mock-script", help="scripted backend replies (JSON file)")
    parser.add_argument("--backend-url", help="chat-completions endpoint for the agents")
    parser.add_argument("--backend-model", help="model name for the agent backend")
    parser.add_argument("--judge-url", help="chat-completions endpoint for the judges")
    parser.add_argument("--judge-model", help="model name for the judge backend")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citeqa",
        description="Retrieval-augmented question answering with cited, revised answers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build the sparse and dense indexes")
    _add_shared_flags(p_index, qa=False)
    p_index.add_argument("--force", action="store_true", help="overwrite a mismatched index")
    p_index.set_defaults(func=cmd_index)

    p_query = sub.add_parser("query", help="answer one question")
    p_query.add_argument("question", help="the question to answer")
    _add_shared_flags(p_query, qa=False)
    _add_pipeline_flags(p_query)
    p_query.add_argument("--verbose", action="store_true", help="print filter and trace details")
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("evaluate", help="run a QA dataset and write a report")
    _add_shared_flags(p_eval, qa=True)
    _add_pipeline_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CiteQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
