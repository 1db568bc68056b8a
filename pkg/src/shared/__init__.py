"""
共享模块 - 跨层使用的通用组件（异常层次）
"""

from .exceptions import (
    GCRNError,
    ShapeError,
    ConstructionError,
    SymmetryError,
    ConvergenceError,
    GraphError,
    CellError,
    NumericalError,
    DataError,
    ParseError,
    ConfigError,
    CheckpointError,
)

__all__ = [
    'GCRNError',
    'ShapeError',
    'ConstructionError',
    'SymmetryError',
    'ConvergenceError',
    'GraphError',
    'CellError',
    'NumericalError',
    'DataError',
    'ParseError',
    'ConfigError',
    'CheckpointError',
]
