"""
序列化模块
图、点集、数据集与检查点的版本化文本格式
"""

from .checkpoint_serializer import CHECKPOINT_MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from .dataset_serializer import (
    SEQUENCE_MAGIC,
    TOKEN_MAGIC,
    load_dataset,
    load_sequences,
    load_tokens,
    save_dataset,
)
from .graph_serializer import GRAPH_MAGIC, load_graph, load_points, save_graph, save_points
from .text_format import FLOAT_FORMAT, format_float

__all__ = [
    "CHECKPOINT_MAGIC",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "SEQUENCE_MAGIC",
    "TOKEN_MAGIC",
    "load_dataset",
    "load_sequences",
    "load_tokens",
    "save_dataset",
    "GRAPH_MAGIC",
    "load_graph",
    "load_points",
    "save_graph",
    "save_points",
    "FLOAT_FORMAT",
    "format_float",
]
