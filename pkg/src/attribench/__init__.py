"""Benchmark harness for attributed information seeking.

Generation scenarios (closed-book, retrieve-then-generate, generate-then-
retrieve), lexical retrieval with gateway reranking, rank fusion, and the
full answer-correctness / citation-quality metric suite, runnable fully
offline against deterministic mock backends.
"""

from .corpus import (
    AnswerAnnotations,
    AttributedAnswer,
    Corpus,
    CorpusMapping,
    DatasetMapping,
    DatasetStats,
    EvalQuery,
    GoldPassage,
    Passage,
    Statement,
    ValidationReport,
    dataset_stats,
    load_corpus,
    load_dataset,
    validate,
)
from .fusion import FusionInput, fuse, max_oracle, normalize
from .metrics import (
    OverlapScore,
    PRF,
    autoais_cit,
    autoais_pssg,
    best_over_candidates,
    bleu,
    citation_overlap,
    nli_citation_precision,
    nli_citation_recall,
    rouge_l,
    similarity,
)
from .modelio import (
    ChatRequest,
    GatewayError,
    ScorePair,
    ScoreResult,
    build_chat_backend,
    build_score_backend,
    nli_binary,
)
from .pipelines import (
    PipelineOutput,
    PromptSet,
    ScenarioConfig,
    SubqueryBatch,
    parse_attributed_answer,
    run_g,
    run_gtr,
    run_rtg,
    run_scenario,
    segment_statements,
)
from .retrieval import (
    BM25Params,
    Index,
    RankedList,
    bm25_score,
    build_index,
    eval_ranked_list,
    rerank,
    search,
)

__version__ = "0.1.0"
