"""
异常层次
所有模块共享的异常类型，CLI 据此映射退出码
"""

from typing import Optional


class GCRNError(Exception):
    """gcrn 异常基类"""
    pass


class ShapeError(GCRNError, ValueError):
    """维度不匹配"""
    pass


class ConstructionError(GCRNError, ValueError):
    """稀疏矩阵或图构造失败"""
    pass


class SymmetryError(ConstructionError):
    """要求对称的矩阵不对称"""
    pass


class ConvergenceError(GCRNError):
    """迭代算法未在最大迭代次数内收敛"""

    def __init__(self, message: str, last_estimate: float, iterations: int):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.iterations = iterations


class GraphError(GCRNError, ValueError):
    """图参数或图文件非法"""
    pass


class CellError(GCRNError, ValueError):
    """循环单元规格、参数或缓存非法"""
    pass


class NumericalError(GCRNError):
    """训练中出现非有限数值"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class DataError(GCRNError, ValueError):
    """数据集内容或批处理参数非法"""
    pass


class ParseError(GCRNError, ValueError):
    """文本格式解析失败，带行号与字段名"""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"第 {line} 行")
        if field:
            location.append(f"字段 '{field}'")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full)
        self.line = line
        self.field = field


class ConfigError(GCRNError, ValueError):
    """运行配置非法，带行号与键名"""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"第 {line} 行")
        if key:
            location.append(f"键 '{key}'")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full)
        self.line = line
        self.key = key


class CheckpointError(GCRNError, ValueError):
    """检查点版本或张量形状不匹配"""

    def __init__(self, message: str, tensor: Optional[str] = None):
        super().__init__(f"{message} (张量 '{tensor}')" if tensor else message)
        self.tensor = tensor
