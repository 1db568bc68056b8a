"""
运行配置
`key = value` 文本格式（`#` 注释，每行一个键，键带命名空间），由 pydantic 模型校验。
parse → serialize → parse 得到相同的 RunConfig。
"""

import os
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.shared.exceptions import ConfigError

PATH_KEYS = ("data.train", "data.valid", "graph.path", "graph.points", "output.dir")
REQUIRED_FILE_KEYS = ("data.train", "data.valid", "graph.path", "graph.points")
NONE_LITERAL = "none"


class _FieldConflict(ValueError):
    """跨字段校验失败，记录出错的键"""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


class DataSection(_Section):
    source: Literal["generate", "file"] = "generate"
    train: Optional[str] = None
    valid: Optional[str] = None
    valid_fraction: float = Field(0.2, ge=0.0, lt=1.0)


class ShapesSection(_Section):
    patch: int = Field(16, ge=1)
    count: int = Field(40, ge=0)
    n_shapes: int = Field(2, ge=1)
    kind: Literal["square", "cross", "glyph"] = "square"
    sprite_size: int = Field(4, ge=1)
    seq_len: int = Field(20, ge=2)
    min_speed: int = Field(1, ge=0)
    max_speed: int = Field(2, ge=0)
    rotate: bool = False
    max_angular_speed: float = Field(0.3, ge=0.0)
    seed: int = Field(0, ge=0)


class TokensSection(_Section):
    vocab: int = Field(12, ge=2)
    length: int = Field(2000, ge=2)
    valid_length: int = Field(400, ge=2)


class GraphSection(_Section):
    source: Optional[Literal["grid", "file", "knn", "cycle"]] = None
    rows: Optional[int] = Field(None, ge=1)
    cols: Optional[int] = Field(None, ge=1)
    connectivity: int = 8
    path: Optional[str] = None
    points: Optional[str] = None
    k: int = Field(4, ge=1)
    metric: Literal["euclidean", "cosine"] = "cosine"
    kernel_width: Union[Literal["auto"], float] = "auto"
    lambda_max: Literal["estimate", "bound"] = "estimate"

    @field_validator("connectivity")
    @classmethod
    def _check_connectivity(cls, value: int) -> int:
        if value not in (4, 8):
            raise ValueError(f"connectivity 必须为 4 或 8，得到 {value}")
        return value


class CellSection(_Section):
    kind: Literal["fclstm", "gcrn_m1", "gclstm_m2", "gcrnn", "gcgru"] = "gclstm_m2"
    d_h: int = Field(8, ge=1)
    K: int = Field(3, ge=1)
    peepholes: bool = True
    peephole_shape: Literal["per_vertex", "shared"] = "per_vertex"
    layers: int = 1

    @field_validator("layers")
    @classmethod
    def _check_layers(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError(f"layers 必须为 1 或 2，得到 {value}")
        return value


class ModelSection(_Section):
    readout: Optional[Literal["dense", "pooled", "vertex"]] = None


class OptimSection(_Section):
    kind: Literal["rmsprop", "clipped_sgd"] = "rmsprop"
    lr: Optional[float] = Field(None, gt=0.0)
    decay: float = Field(0.9, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    max_grad_norm: float = Field(5.0, gt=0.0)
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    lr_decay_start: int = Field(4, ge=0)


class TrainSection(_Section):
    unroll: int = Field(19, ge=1)
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(10, ge=1)
    dropout_keep: float = Field(1.0, gt=0.0, le=1.0)
    patience: int = Field(3, ge=0)
    seed: int = Field(0, ge=0)
    deterministic: bool = True
    max_steps: Optional[int] = Field(None, ge=1)


class OutputSection(_Section):
    dir: str = "runs/default"


class RunConfig(BaseModel):
    """一次训练运行的完整配置

    依赖其它键的缺省值（graph.rows/cols、graph.source、model.readout、optim.lr）
    在校验后补全，序列化时写出补全后的值。
    """
    model_config = ConfigDict(extra="forbid", validate_default=True)

    task: Literal["shapes", "tokens"] = "shapes"
    data: DataSection = Field(default_factory=DataSection)
    shapes: ShapesSection = Field(default_factory=ShapesSection)
    tokens: TokensSection = Field(default_factory=TokensSection)
    graph: GraphSection = Field(default_factory=GraphSection)
    cell: CellSection = Field(default_factory=CellSection)
    model: ModelSection = Field(default_factory=ModelSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    train: TrainSection = Field(default_factory=TrainSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _resolve_and_check(self) -> "RunConfig":
        is_tokens = self.task == "tokens"
        if self.graph.source is None:
            self.graph.source = "cycle" if is_tokens else "grid"
        if self.graph.rows is None:
            self.graph.rows = self.shapes.patch
        if self.graph.cols is None:
            self.graph.cols = self.shapes.patch
        if self.model.readout is None:
            self.model.readout = "pooled" if is_tokens else "dense"
        if self.optim.lr is None:
            self.optim.lr = 1.0 if self.optim.kind == "clipped_sgd" else 1e-3

        if is_tokens and self.model.readout == "dense":
            raise _FieldConflict("model.readout", "词任务的读出层必须为 pooled 或 vertex")
        if not is_tokens and self.model.readout != "dense":
            raise _FieldConflict("model.readout", "帧任务的读出层必须为 dense")
        if self.data.source == "file":
            for key in ("train", "valid"):
                if getattr(self.data, key) is None:
                    raise _FieldConflict(f"data.{key}", f"data.source = file 时必须给出 data.{key}")
        if self.graph.source == "file" and self.graph.path is None:
            raise _FieldConflict("graph.path", "graph.source = file 时必须给出 graph.path")
        if self.graph.source == "knn" and self.graph.points is None:
            raise _FieldConflict("graph.points", "graph.source = knn 时必须给出 graph.points")
        if self.graph.source == "grid" and not is_tokens and self.data.source == "generate":
            if self.graph.rows * self.graph.cols != self.shapes.patch ** 2:
                raise _FieldConflict("graph.rows", f"网格 {self.graph.rows}×{self.graph.cols} 与 patch² = {self.shapes.patch ** 2} 不一致")
        if self.shapes.sprite_size > self.shapes.patch:
            raise _FieldConflict("shapes.sprite_size", "精灵尺寸不能大于 patch")
        if self.shapes.max_speed < self.shapes.min_speed:
            raise _FieldConflict("shapes.max_speed", "max_speed 不能小于 min_speed")
        if isinstance(self.graph.kernel_width, float) and self.graph.kernel_width <= 0:
            raise _FieldConflict("graph.kernel_width", "kernel_width 必须 > 0 或为 auto")
        return self

    def get(self, key: str) -> Any:
        """按命名空间键取值，如 get("train.unroll")"""
        if "." not in key:
            return getattr(self, key)
        section, name = key.split(".", 1)
        return getattr(getattr(self, section), name)

    def to_flat(self) -> List[Tuple[str, str]]:
        """按字段声明顺序展开为 (key, 文本值)；未设置的可选键省略"""
        entries = [("task", self.task)]
        for section_name in type(self).model_fields:
            section = getattr(self, section_name)
            if not isinstance(section, BaseModel):
                continue
            for name in type(section).model_fields:
                value = getattr(section, name)
                if value is None:
                    continue
                entries.append((f"{section_name}.{name}", format_value(value)))
        return entries


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def known_keys() -> List[str]:
    keys = ["task"]
    for section_name, field_info in RunConfig.model_fields.items():
        annotation = field_info.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            keys.extend(f"{section_name}.{name}" for name in annotation.model_fields)
    return keys


def _split_line(raw: str, number: int) -> Optional[Tuple[str, str]]:
    text = raw.split("#", 1)[0].strip()
    if not text:
        return None
    key, sep, value = text.partition("=")
    key, value = key.strip(), value.strip()
    if not sep or not key:
        raise ConfigError(f"应为 'key = value'，得到 '{raw.strip()}'", line=number)
    if not value:
        raise ConfigError(f"键 {key} 缺少取值", line=number, key=key)
    return key, value


def _error_key(error: Dict[str, Any]) -> Optional[str]:
    ctx_error = (error.get("ctx") or {}).get("error")
    if isinstance(ctx_error, _FieldConflict):
        return ctx_error.key
    loc = [str(part) for part in error.get("loc", ())]
    if not loc:
        return None
    return loc[0] if loc[0] == "task" else ".".join(loc[:2])


def _error_message(error: Dict[str, Any]) -> str:
    ctx_error = (error.get("ctx") or {}).get("error")
    if isinstance(ctx_error, _FieldConflict):
        return str(ctx_error)
    return error.get("msg", "取值非法")


def parse_run_config(text: str, base_dir: Optional[str] = None, check_files: bool = True) -> RunConfig:
    """解析配置文本

    Args:
        text: 配置文本
        base_dir: 相对路径的基准目录（通常为配置文件所在目录），None 为当前目录
        check_files: 是否要求引用的文件存在

    Raises:
        ConfigError: 携带行号与键
    """
    base_dir = os.path.abspath(base_dir or os.getcwd())
    allowed = set(known_keys())
    lines: Dict[str, int] = {}
    nested: Dict[str, Any] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        parsed = _split_line(raw, number)
        if parsed is None:
            continue
        key, value = parsed
        if key not in allowed:
            raise ConfigError(f"未知的配置键 {key}", line=number, key=key)
        if key in lines:
            raise ConfigError(f"重复的配置键 {key}（首次出现在第 {lines[key]} 行）", line=number, key=key)
        lines[key] = number
        if value.lower() == NONE_LITERAL:
            continue
        if key in PATH_KEYS:
            value = os.path.normpath(os.path.join(base_dir, os.path.expanduser(value)))
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        else:
            nested[key] = value

    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as e:
        error = e.errors()[0]
        key = _error_key(error)
        raise ConfigError(_error_message(error), line=lines.get(key), key=key)

    if "output.dir" not in lines:
        config.output.dir = os.path.normpath(os.path.join(base_dir, config.output.dir))
    if check_files:
        for key in REQUIRED_FILE_KEYS:
            path = config.get(key)
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"{key} 指向的文件不存在: {path}", line=lines.get(key), key=key)
    return config


def load_run_config(path: str, check_files: bool = True) -> RunConfig:
    """读取配置文件；相对路径相对于配置文件所在目录解析"""
    if not os.path.isfile(path):
        raise ConfigError(f"配置文件不存在: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_run_config(text, base_dir=os.path.dirname(os.path.abspath(path)), check_files=check_files)


def serialize_run_config(config: RunConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in config.to_flat())


def run_config_from_flat(flat: Dict[str, str]) -> RunConfig:
    """由检查点元数据中的扁平配置重建（路径已为绝对路径，不检查存在性）"""
    text = "".join(f"{key} = {value}\n" for key, value in flat.items())
    return parse_run_config(text, check_files=False)
