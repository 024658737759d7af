"""Text categorization by recursive composition over discourse dependency trees."""

from .autodiff import Tape, Tensor, backward, set_default_dtype
from .corpus import DocumentRecord, read_corpus, write_corpus
from .model import AttentionRecord, DiscourseModel, ModelConfig
from .rng import SeededRng
from .textprep import Vocabulary, build_vocabulary, normalize_tokens
from .training import Metrics, TrainingConfig, evaluate, grid_search, kfold_split, train
from .trees import (DependencyTree, RelationVocabulary, parse_rst,
                    rst_to_dependency, validate_dependency)

__version__ = "0.1.0"

__all__ = [
    "AttentionRecord", "DependencyTree", "DiscourseModel", "DocumentRecord",
    "Metrics", "ModelConfig", "RelationVocabulary", "SeededRng", "Tape",
    "Tensor", "TrainingConfig", "Vocabulary", "backward", "build_vocabulary",
    "evaluate", "grid_search", "kfold_split", "normalize_tokens", "parse_rst",
    "read_corpus", "rst_to_dependency", "set_default_dtype", "train",
    "validate_dependency", "write_corpus", "__version__",
]
