from .decode import decode_heads, decode_tree, greedy_heads, mst_heads, tree_score
from .model import (
    BiaffineArc,
    BiaffineLabel,
    BiaffineScorer,
    BiLSTM,
    ParserConfig,
    biaffine_arc_scores,
    bilstm_encode,
    parser_loss,
)
from .schedule import lr_schedule, unfreezing_plan
from .train import DependencyParser, ParserTrainResult, train_parser

__all__ = [
    "BiLSTM",
    "BiaffineArc",
    "BiaffineLabel",
    "BiaffineScorer",
    "DependencyParser",
    "ParserConfig",
    "ParserTrainResult",
    "biaffine_arc_scores",
    "bilstm_encode",
    "decode_heads",
    "decode_tree",
    "greedy_heads",
    "lr_schedule",
    "mst_heads",
    "parser_loss",
    "train_parser",
    "tree_score",
    "unfreezing_plan",
]
