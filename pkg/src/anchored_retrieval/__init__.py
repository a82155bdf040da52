"""Retrieval under non-faithful queries by anchoring recovery hypotheses to the observed query."""

from .aggregation import AggregationConfig, RunBundle, aggregate, alpha_grid, pool_unanchored
from .dense import VectorIndex, score_dense
from .faithfulness import edit_similarity, faithfulness, faithfulness_report, rouge_l_char_f1
from .hypotheses import CorruptorProvider, LLMProvider, LLMSettings, PrecomputedProvider, attach_hypotheses
from .io import load_corpus, load_qrels, load_queries, read_run, write_run
from .lexical import LexicalIndex, build_lexical_index, score_lexical
from .metrics import compare_runs, evaluate_run, paired_ttest
from .noise import LEVELS, NoiseLevel, corrupt_query
from .pipeline import PipelineConfig, run_pipeline
from .simulation import simulate, synthetic_corpus
from .tokenize import Tokenizer
from .types import Corpus, Document, QueryRecord, Qrels, RunList

__version__ = "0.1.0"
