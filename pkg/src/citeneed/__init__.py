"""Citation need detection and citation reason classification.

A numpy-only reimplementation of GRU/attention statement classifiers,
the feature-based baselines they are compared against, and the corpus
and analysis tooling around them.
"""

from .corpus import (LabeledInstance, RawArticle, ReasonInstance, Statement, build_fa_dataset,
                     build_lqn_dataset, build_rnd_dataset, parse_article, read_corpus, segment_sentences,
                     write_corpus)
from .models import (NeedModel, ReasonModel, TrainConfig, evaluate, fine_tune_reason, load_checkpoint,
                     save_checkpoint, train_need)

__version__ = "0.1.0"

__all__ = [
    "LabeledInstance", "RawArticle", "ReasonInstance", "Statement", "build_fa_dataset", "build_lqn_dataset",
    "build_rnd_dataset", "parse_article", "read_corpus", "segment_sentences", "write_corpus",
    "NeedModel", "ReasonModel", "TrainConfig", "evaluate", "fine_tune_reason", "load_checkpoint",
    "save_checkpoint", "train_need",
]
