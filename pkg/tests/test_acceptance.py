"""Acceptance gate: one timed check per headline guarantee.

Every test prints a single PASS line with its runtime so the suite output
doubles as a checklist. Oracles here are deliberately independent re-
implementations (own tokenizer, own formulas) rather than calls back into
the library.
"""
from __future__ import annotations

import math
import random
import re
import statistics
import time
from pathlib import Path

from citeqa import (
    Document,
    DocumentStore,
    HybridConfig,
    LocalHashEmbedding,
    Pipeline,
    PipelineConfig,
    RelevanceJudgment,
    RetrievalResult,
    ScoredDoc,
    ScriptedBackend,
    build_dense_index,
    build_sparse_index,
    embed,
    filter_documents,
    fuse_hybrid,
    load_corpus,
    mrr_at_k,
    parse_citations,
    recall_at_k,
    search_dense,
    search_hybrid,
    search_hybrid_excluding,
    search_sparse,
)

DEMO_CORPUS = Path(__file__).resolve().parents[1] / "demo" / "corpus_10.jsonl"

_ORACLE_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

VOCAB = [
    "amber", "basin", "cedar", "delta", "ember", "fjord", "gale", "heron",
    "inlet", "jade", "karst", "loess", "mesa", "noria", "oxbow", "playa",
    "quill", "ridge", "stone", "tarn", "umber", "vale", "weir", "xylem",
    "yew", "zephyr", "crag", "dune", "moor", "reef",
]


def report(label: str, started: float, limit: float) -> None:
    elapsed = time.perf_counter() - started
    print(f"PASS {label}: {elapsed:.2f}s (limit {limit:.0f}s)")
    assert elapsed < limit


def close(a: float, b: float, rel: float) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# 1. BM25 oracle equivalence


def bm25_brute_force(
    texts: dict[str, str], query: str, k1: float, b: float
) -> list[tuple[str, float]]:
    tokens = {doc_id: _ORACLE_TOKEN_RE.findall(text.lower()) for doc_id, text in texts.items()}
    n_docs = len(tokens)
    avg_len = sum(len(t) for t in tokens.values()) / n_docs
    ranked = {}
    for doc_id, doc_tokens in tokens.items():
        score = 0.0
        for term in _ORACLE_TOKEN_RE.findall(query.lower()):
            tf = doc_tokens.count(term)
            if tf == 0:
                continue
            df = sum(1 for other in tokens.values() if term in other)
            idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
            norm = tf + k1 * (1.0 - b + b * len(doc_tokens) / avg_len)
            score += idf * tf * (k1 + 1.0) / norm
        if score > 0.0:
            ranked[doc_id] = score
    return sorted(ranked.items(), key=lambda item: (-item[1], item[0]))


def test_bm25_matches_brute_force_oracle():
    started = time.perf_counter()
    rng = random.Random(1201)
    for _ in range(50):
        n_docs = rng.randint(3, 100)
        vocab = rng.sample(VOCAB, rng.randint(4, 30))
        texts = {
            f"doc{i:03d}": " ".join(rng.choices(vocab, k=rng.randint(1, 30)))
            for i in range(n_docs)
        }
        k1 = rng.choice([1.2, 0.9, 2.0])
        b = rng.choice([0.75, 0.0, 1.0])
        store = DocumentStore([Document(id=i, text=t) for i, t in texts.items()])
        index = build_sparse_index(store)
        query = " ".join(rng.choices(vocab, k=rng.randint(1, 4)))

        expected = bm25_brute_force(texts, query, k1, b)
        result = search_sparse(index, query, k=n_docs, k1=k1, b=b)
        assert [e.doc_id for e in result.entries] == [doc_id for doc_id, _ in expected]
        for entry, (_, score) in zip(result.entries, expected):
            assert close(entry.score, score, 1e-9)
    report("BM25 oracle equivalence (50 corpora)", started, 10.0)


# ---------------------------------------------------------------------------
# 2. Fusion endpoints


def ranked_result(scores: dict[str, float], query: str, source: str) -> RetrievalResult:
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    entries = tuple(
        ScoredDoc(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ordered, 1)
    )
    return RetrievalResult(query_text=query, source=source, entries=entries)


def min_max(scores: dict[str, float]) -> dict[str, float]:
    if not scores:
        return {}
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        return {doc_id: 1.0 for doc_id in scores}
    return {doc_id: (s - lo) / (hi - lo) for doc_id, s in scores.items()}


def test_fusion_reproduces_single_retriever_endpoints():
    started = time.perf_counter()
    rng = random.Random(77)
    for _ in range(50):
        universe = [f"d{i}" for i in range(rng.randint(2, 25))]
        sparse_scores = {
            d: rng.uniform(0.0, 8.0) for d in rng.sample(universe, rng.randint(1, len(universe)))
        }
        dense_scores = {
            d: rng.uniform(-1.0, 1.0) for d in rng.sample(universe, rng.randint(1, len(universe)))
        }
        sparse = ranked_result(sparse_scores, "q", "sparse")
        dense = ranked_result(dense_scores, "q", "dense")
        union = set(sparse_scores) | set(dense_scores)

        for alpha, side_scores in ((1.0, sparse_scores), (0.0, dense_scores)):
            config = HybridConfig(alpha=alpha, pool_size=50, final_k=50)
            fused = fuse_hybrid(sparse, dense, config)
            normalized = min_max(side_scores)
            expected = sorted(
                ((doc_id, normalized.get(doc_id, 0.0)) for doc_id in union),
                key=lambda item: (-item[1], item[0]),
            )
            assert [e.doc_id for e in fused.entries] == [d for d, _ in expected]
            assert [e.score for e in fused.entries] == [s for _, s in expected]

    # Hand case at the default 0.65/0.35 split.
    sparse = ranked_result({"a": 10.0, "b": 5.0, "c": 0.0}, "q", "sparse")
    dense = ranked_result({"a": 0.2, "b": 0.9, "c": 0.1}, "q", "dense")
    fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=0.65, pool_size=10, final_k=10))
    by_id = {e.doc_id: e.score for e in fused.entries}
    assert abs(by_id["a"] - (0.65 * 1.0 + 0.35 * 0.125)) < 1e-12
    assert abs(by_id["b"] - (0.65 * 0.5 + 0.35 * 1.0)) < 1e-12
    assert abs(by_id["c"] - 0.0) < 1e-12
    report("fusion endpoints and hand case (50 pools)", started, 5.0)


# ---------------------------------------------------------------------------
# 3. Dynamic filter oracle


def make_judgments(scores: list[float]) -> tuple[RelevanceJudgment, ...]:
    return tuple(
        RelevanceJudgment(doc_id=f"d{i}", log_p_yes=s, log_p_no=0.0, score=s)
        for i, s in enumerate(scores)
    )


def test_filter_matches_mean_sigma_oracle():
    started = time.perf_counter()
    rng = random.Random(424242)
    for _ in range(1000):
        scores = [rng.uniform(-5.0, 5.0) for _ in range(rng.randint(1, 12))]
        decision = filter_documents(make_judgments(scores), n=0.5)

        threshold = statistics.mean(scores) - 0.5 * statistics.pstdev(scores)
        expected = {f"d{i}" for i, s in enumerate(scores) if s >= threshold}
        assert set(decision.retained) == expected
        assert set(decision.filtered) == set(f"d{i}" for i in range(len(scores))) - expected
        assert close(decision.adjusted_tau, threshold, 1e-9)

        # The retained set is invariant under positive affine rescaling.
        shift, scale = rng.uniform(-3.0, 3.0), rng.uniform(0.5, 4.0)
        moved = filter_documents(make_judgments([s * scale + shift for s in scores]), n=0.5)
        assert set(moved.retained) == set(decision.retained)

    decision = filter_documents(make_judgments([2.0, 0.0, -2.0]), n=0.5)
    assert abs(decision.adjusted_tau - (-0.81650)) < 1e-5
    assert set(decision.retained) == {"d0", "d1"}
    report("dynamic filter oracle (1000 sets)", started, 5.0)


# ---------------------------------------------------------------------------
# 4. Citation round-trip

_EDGE = ".,;:!? \t\r\n"
_WORDS = ["alpha", "beta", "gamma", "delta", "omega", "tide", "lumen", "sol"]


def generate_cited_text(rng: random.Random) -> tuple[str, list[tuple[str, tuple[int, ...]]], str]:
    pieces = []
    expected = []
    for _ in range(rng.randint(1, 5)):
        body = (
            rng.choice(["", " ", ". ", "; "])
            + " ".join(rng.choices(_WORDS, k=rng.randint(1, 4)))
            + rng.choice(["", " ", ".", ", "])
        )
        group = sorted(rng.sample(range(1, 31), rng.randint(1, 3)))
        markers = list(group)
        if rng.random() < 0.3:
            markers.append(rng.choice(group))
        pieces.append(body + "".join(f"[{i}]" for i in markers))
        expected.append((body.strip().lstrip(_EDGE), tuple(group)))
    tail = rng.choice(["", ".", " Nothing else follows.", "\n"])
    return "".join(pieces) + tail, expected, tail


def test_citation_parse_round_trip():
    started = time.perf_counter()
    rng = random.Random(9090)
    for _ in range(500):
        text, expected, tail = generate_cited_text(rng)
        parsed = parse_citations(text)
        rebuilt = "".join(text[c.char_span[0] : c.char_span[1]] for c in parsed.claims)
        assert rebuilt + parsed.trailing == text
        assert [(c.text, c.citations) for c in parsed.claims] == expected
        assert parsed.trailing == tail
    report("citation round-trip (500 texts)", started, 5.0)


# ---------------------------------------------------------------------------
# 5. Metric oracles


def test_metrics_match_brute_force():
    started = time.perf_counter()
    rng = random.Random(31337)
    universe = [f"u{i}" for i in range(15)]
    for _ in range(1000):
        ranked = rng.sample(universe, rng.randint(1, 15))
        gold = rng.sample(universe, rng.randint(1, 5))
        k = rng.randint(1, 15)

        top = ranked[:k]
        assert recall_at_k(ranked, gold, k) == sum(1 for g in gold if g in top) / len(gold)
        expected_mrr = 0.0
        for position, doc_id in enumerate(top, 1):
            if doc_id in gold:
                expected_mrr = 1.0 / position
                break
        assert mrr_at_k(ranked, gold, k) == expected_mrr

    assert recall_at_k(["a", "b"], ["a", "b"], 2) == 1.0
    assert mrr_at_k(["x", "y", "g"], ["g"], 3) == 1 / 3
    assert mrr_at_k(["x", "y"], ["g"], 2) == 0.0
    report("metric oracles (1000 instances)", started, 5.0)


# ---------------------------------------------------------------------------
# 6. End-to-end determinism

_GAP_ANALYSIS = (
    "COMPONENT: how panels generate electricity\nSTATUS: fully_answered\nCLAIMS: 1 2\n\n"
    "COMPONENT: how surplus energy is stored\nSTATUS: not_answered\nCLAIMS: none\n"
    "FOLLOWUP: how is surplus electricity stored for later use\n"
)


def scripted_revision_backend(first_ids: list[str]) -> ScriptedBackend:
    backend = ScriptedBackend()
    levels = [(-0.1, -3.0)] * 3 + [(-5.1, -0.1)] * 2
    for doc_id, (yes, no) in zip(first_ids, levels):
        backend.script_chat(f"draft from {doc_id}", tag=f"agent1:{doc_id}")
        backend.script_logprobs({"Yes": yes, "No": no}, tag=f"agent2:{doc_id}")
    backend.script_chat("Panels convert light [1]. Output varies [2].", tag="agent3")
    backend.script_chat(_GAP_ANALYSIS, tag="agent4:analyze")
    backend.script_chat("Batteries hold surplus power [1].", tag="agent4:followup:1")
    backend.script_chat(
        "Panels convert light [1]. Output varies [2]. Batteries hold surplus power [4].",
        tag="agent4:synthesize",
    )
    return backend


def test_end_to_end_determinism_with_revision():
    started = time.perf_counter()
    store = load_corpus(DEMO_CORPUS)
    provider = LocalHashEmbedding(64)
    sparse = build_sparse_index(store)
    dense = build_dense_index(store, provider)
    config = PipelineConfig(retrieval=HybridConfig(pool_size=10, final_k=5))
    query = "how do solar panels generate electricity and how is surplus energy stored"
    first_ids = search_hybrid(sparse, dense, provider, query, config.retrieval).doc_ids()
    assert len(first_ids) == 5

    outputs = []
    last = None
    for _ in range(5):
        backend = scripted_revision_backend(first_ids)
        last = Pipeline(store, sparse, dense, provider, backend, config).run(query)
        outputs.append(last.to_json())
        assert backend.remaining() == 0
    assert len(set(outputs)) == 1

    # All four agents ran, and the revision round excluded first-stage docs.
    steps = {event.step for event in last.trace}
    assert {"agent1", "agent2", "filter", "agent3", "agent4_analyze", "agent4_revise"} <= steps
    assert last.completeness.needs_revision
    assert last.second_stage is not None
    assert set(last.second_stage.doc_ids()).isdisjoint(first_ids)
    assert len(last.final_answer.references) == 3 + len(last.second_stage.doc_ids())
    report("end-to-end determinism (5 runs, one revision)", started, 10.0)


# ---------------------------------------------------------------------------
# 7. Hybrid beats both single retrievers

_RARE = ["zorvexa", "qumbrel", "fintarq", "wubrosk", "hyxelmo", "drovnak", "plimzor", "kryvost"]


def split_reachability_fixture() -> DocumentStore:
    """Half the gold is findable only lexically, half only by subword shape.

    Each query pairs a rare exact token (present verbatim in one long,
    junk-diluted document) with a shared topic word that every other
    document carries only as morphological variants.
    """
    docs = []
    for i, rare in enumerate(_RARE):
        junk = " ".join(f"jx{i}w{j}blk" for j in range(40))
        docs.append(Document(id=f"lex{i}", text=f"{rare} {junk}"))
        docs.append(Document(id=f"sem{i}", text=f"{rare}s galaxoras"))
    for j in range(30):
        docs.append(Document(id=f"dis{j:02d}", text=f"galaxoran galaxorite pd{j}word ex{j}fill"))
    return DocumentStore(docs)


def test_hybrid_beats_both_single_retrievers():
    started = time.perf_counter()
    store = split_reachability_fixture()
    provider = LocalHashEmbedding(64)
    sparse = build_sparse_index(store)
    dense = build_dense_index(store, provider)
    config = HybridConfig()

    k = 20
    recalls = {"sparse": 0.0, "dense": 0.0, "hybrid": 0.0}
    for i, rare in enumerate(_RARE):
        query = f"{rare} galaxora"
        gold = [f"lex{i}", f"sem{i}"]
        recalls["sparse"] += recall_at_k(search_sparse(sparse, query, k).doc_ids(), gold, k)
        dense_ids = search_dense(dense, embed(provider, query), k, query_text=query).doc_ids()
        recalls["dense"] += recall_at_k(dense_ids, gold, k)
        hybrid_ids = search_hybrid(sparse, dense, provider, query, config).doc_ids()
        recalls["hybrid"] += recall_at_k(hybrid_ids, gold, k)

    for name in recalls:
        recalls[name] /= len(_RARE)
    assert recalls["hybrid"] > recalls["sparse"]
    assert recalls["hybrid"] > recalls["dense"]
    report(
        "hybrid beats singles "
        f"(recall@20 hybrid {recalls['hybrid']:.2f} > sparse {recalls['sparse']:.2f}, "
        f"dense {recalls['dense']:.2f})",
        started,
        30.0,
    )


# ---------------------------------------------------------------------------
# 8. Exclusion soundness


def test_exclusion_never_leaks_excluded_ids():
    started = time.perf_counter()
    rng = random.Random(6006)
    provider = LocalHashEmbedding(16)
    for _ in range(200):
        n_docs = rng.randint(4, 12)
        docs = [
            Document(id=f"d{i}", text=" ".join(rng.choices(VOCAB[:20], k=rng.randint(2, 8))))
            for i in range(n_docs)
        ]
        store = DocumentStore(docs)
        sparse = build_sparse_index(store)
        dense = build_dense_index(store, provider)
        excluded = set(rng.sample([d.id for d in docs], rng.randint(0, n_docs)))
        query = " ".join(rng.choices(VOCAB[:20], k=rng.randint(1, 3)))
        config = HybridConfig(pool_size=12, final_k=5)

        result = search_hybrid_excluding(sparse, dense, provider, query, excluded, config)
        assert not excluded.intersection(result.doc_ids())
    report("exclusion soundness (200 corpora)", started, 10.0)
