"""
检查点文件 GCRNCKPT v1

    GCRNCKPT v1
    <name> <ndim> <d1> ... <dn>      每个张量一个头行
    <values ...>                     行主序，每行对应最后一维
    ...
    [metadata]
    key = value                      顺序固定，保证 save→load→save 逐字节一致

参数张量在前（模型规格顺序），随后是 RMSProp 累加器 optim.acc.<name>。
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.cells import CellSpec
from src.core.model import ModelSpec, Params
from src.core.optimizers import OptimizerConfig, OptimizerKind, OptimizerState
from src.shared.exceptions import CellError, CheckpointError, ParseError

from .text_format import LineReader, format_float, format_row, parse_int, write_text

CHECKPOINT_MAGIC = "GCRNCKPT v1"
METADATA_MARKER = "[metadata]"
ACCUMULATOR_PREFIX = "optim.acc."
CONFIG_PREFIX = "config."


@dataclass
class Checkpoint:
    """模型规格、参数、优化器状态与训练进度

    epoch 为已完成的最后一个 epoch；续训从 epoch + 1 开始。
    config 为扁平化的运行配置（绝对路径），评估时据此重建图。
    """
    spec: ModelSpec
    params: Params
    optimizer: OptimizerState
    epoch: int = 0
    best_valid_loss: float = math.inf
    best_epoch: int = 0
    wait: int = 0
    config: Dict[str, str] = field(default_factory=dict)


def _format_bool(value: bool) -> str:
    return "true" if value else "false"


def _metadata(checkpoint: Checkpoint) -> List[Tuple[str, str]]:
    spec = checkpoint.spec
    cell = spec.cell
    optim = checkpoint.optimizer.config
    entries = [
        ("cell.kind", cell.kind.value),
        ("cell.n", str(cell.n)),
        ("cell.d_x", str(cell.d_x)),
        ("cell.d_h", str(cell.d_h)),
        ("cell.K", str(cell.K)),
        ("cell.peepholes", _format_bool(cell.peepholes)),
        ("cell.peephole_shape", cell.peephole_shape.value),
        ("model.layers", str(spec.layers)),
        ("model.readout", spec.readout.value),
        ("model.vocab", "none" if spec.vocab is None else str(spec.vocab)),
        ("optim.kind", optim.kind.value),
        ("optim.learning_rate", format_float(optim.learning_rate)),
        ("optim.decay_rate", format_float(optim.decay_rate)),
        ("optim.epsilon", format_float(optim.epsilon)),
        ("optim.max_grad_norm", format_float(optim.max_grad_norm)),
        ("optim.lr_decay", format_float(optim.lr_decay)),
        ("optim.lr_decay_start", str(optim.lr_decay_start)),
        ("optim.step", str(checkpoint.optimizer.step)),
        ("train.epoch", str(checkpoint.epoch)),
        ("train.best_valid_loss", format_float(checkpoint.best_valid_loss)),
        ("train.best_epoch", str(checkpoint.best_epoch)),
        ("train.wait", str(checkpoint.wait)),
    ]
    entries.extend((CONFIG_PREFIX + key, value) for key, value in checkpoint.config.items())
    return entries


def _tensor_lines(name: str, value: np.ndarray) -> List[str]:
    shape = value.shape
    lines = [" ".join([name, str(len(shape))] + [str(d) for d in shape])]
    if value.size:
        rows = value.reshape(-1, shape[-1]) if shape else value.reshape(1, 1)
        lines.extend(format_row(row) for row in rows)
    return lines


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """写出检查点；张量与元数据顺序完全由内容决定"""
    lines = [CHECKPOINT_MAGIC]
    for name, value in checkpoint.params.items():
        lines.extend(_tensor_lines(name, np.asarray(value, dtype=np.float64)))
    for name, value in checkpoint.optimizer.accumulators.items():
        lines.extend(_tensor_lines(ACCUMULATOR_PREFIX + name, np.asarray(value, dtype=np.float64)))
    lines.append(METADATA_MARKER)
    lines.extend(f"{key} = {value}" for key, value in _metadata(checkpoint))
    write_text(path, lines)


def _read_tensor(reader: LineReader) -> Tuple[str, np.ndarray]:
    line, tokens = reader.read_tokens("tensor")
    if len(tokens) < 2:
        raise ParseError("张量头应为 'name ndim d1 ... dn'", line=line, field="tensor")
    name = tokens[0]
    ndim = parse_int(tokens[1], line, "ndim", minimum=0)
    if len(tokens) != 2 + ndim:
        raise ParseError(f"张量 {name} 声明 ndim={ndim}，但给出 {len(tokens) - 2} 个维度", line=line, field="ndim")
    shape = tuple(parse_int(token, line, "shape", minimum=0) for token in tokens[2:])
    size = int(np.prod(shape)) if shape else 1
    if size == 0:
        return name, np.zeros(shape)
    width = shape[-1] if shape else 1
    rows = [reader.read_floats(width, name) for _ in range(size // width)]
    return name, np.concatenate(rows).reshape(shape)


def _read_metadata(reader: LineReader) -> Dict[str, str]:
    metadata: Dict[str, str] = {}
    for line, text in _metadata_lines(reader):
        key, sep, value = text.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"元数据应为 'key = value'，得到 '{text}'", line=line, field="metadata")
        if key in metadata:
            raise ParseError(f"重复的元数据键 {key}", line=line, field=key)
        metadata[key] = value
    return metadata


def _metadata_lines(reader: LineReader):
    while not reader.at_end():
        yield reader.read_line("metadata")


def _require(metadata: Dict[str, str], key: str) -> str:
    if key not in metadata:
        raise CheckpointError(f"检查点缺少元数据 {key}")
    return metadata[key]


def _int(metadata: Dict[str, str], key: str) -> int:
    value = _require(metadata, key)
    try:
        return int(value)
    except ValueError:
        raise CheckpointError(f"元数据 {key} 不是整数: {value}")


def _float(metadata: Dict[str, str], key: str) -> float:
    value = _require(metadata, key)
    try:
        return float(value)
    except ValueError:
        raise CheckpointError(f"元数据 {key} 不是数值: {value}")


def _bool(metadata: Dict[str, str], key: str) -> bool:
    value = _require(metadata, key)
    if value not in ("true", "false"):
        raise CheckpointError(f"元数据 {key} 应为 true/false: {value}")
    return value == "true"


def _spec_from_metadata(metadata: Dict[str, str]) -> ModelSpec:
    try:
        cell = CellSpec(
            kind=_require(metadata, "cell.kind"),
            n=_int(metadata, "cell.n"),
            d_x=_int(metadata, "cell.d_x"),
            d_h=_int(metadata, "cell.d_h"),
            K=_int(metadata, "cell.K"),
            peepholes=_bool(metadata, "cell.peepholes"),
            peephole_shape=_require(metadata, "cell.peephole_shape"),
        )
        vocab = _require(metadata, "model.vocab")
        return ModelSpec(
            cell=cell,
            layers=_int(metadata, "model.layers"),
            readout=_require(metadata, "model.readout"),
            vocab=None if vocab == "none" else _int(metadata, "model.vocab"),
        )
    except CellError as e:
        raise CheckpointError(f"检查点中的模型规格非法: {e}")


def _optimizer_config(metadata: Dict[str, str]) -> OptimizerConfig:
    value = _require(metadata, "optim.kind")
    try:
        kind = OptimizerKind(value)
    except ValueError:
        raise CheckpointError(f"未知的优化器类型: {value}")
    return OptimizerConfig(
        kind=kind,
        learning_rate=_float(metadata, "optim.learning_rate"),
        decay_rate=_float(metadata, "optim.decay_rate"),
        epsilon=_float(metadata, "optim.epsilon"),
        max_grad_norm=_float(metadata, "optim.max_grad_norm"),
        lr_decay=_float(metadata, "optim.lr_decay"),
        lr_decay_start=_int(metadata, "optim.lr_decay_start"),
    )


def _check_tensors(spec: ModelSpec, params: Params, what: str) -> None:
    """逐个张量比对名称与形状，错误信息指出第一个不符的张量"""
    expected = spec.param_shapes()
    for name, shape in expected:
        if name not in params:
            raise CheckpointError(f"{what}缺少张量 {name}", tensor=name)
        if params[name].shape != shape:
            raise CheckpointError(
                f"张量 {name} 的形状 {params[name].shape} 与模型规格 {shape} 不一致", tensor=name
            )
    names = {name for name, _ in expected}
    for name in params:
        if name not in names:
            raise CheckpointError(f"{what}含有模型规格之外的张量 {name}", tensor=name)


def load_checkpoint(path: str, expected_spec: Optional[ModelSpec] = None) -> Checkpoint:
    """读取检查点

    expected_spec 给出时，张量必须与其逐一匹配，否则报错并指出张量名。
    """
    reader = LineReader(path)
    reader.expect_header(CHECKPOINT_MAGIC)

    params: Params = {}
    accumulators: Dict[str, np.ndarray] = {}
    while True:
        upcoming = reader.peek()
        if upcoming is None:
            raise ParseError(f"{path} 缺少 {METADATA_MARKER} 段", line=reader.line_number + 1, field="metadata")
        if upcoming == METADATA_MARKER:
            reader.read_tokens("metadata")
            break
        name, value = _read_tensor(reader)
        target = accumulators if name.startswith(ACCUMULATOR_PREFIX) else params
        key = name[len(ACCUMULATOR_PREFIX):] if target is accumulators else name
        if key in target:
            raise CheckpointError(f"重复的张量 {name}", tensor=name)
        target[key] = value

    metadata = _read_metadata(reader)
    spec = _spec_from_metadata(metadata)
    _check_tensors(spec, params, "检查点")
    if expected_spec is not None and expected_spec != spec:
        _check_tensors(expected_spec, params, "检查点相对期望规格")
        raise CheckpointError(f"检查点的模型规格 {spec} 与期望规格 {expected_spec} 不一致")
    params = {name: params[name] for name, _ in spec.param_shapes()}

    optim_config = _optimizer_config(metadata)
    if optim_config.kind == OptimizerKind.RMSPROP:
        for name, value in params.items():
            if name not in accumulators:
                raise CheckpointError(f"缺少优化器累加器 {ACCUMULATOR_PREFIX + name}", tensor=ACCUMULATOR_PREFIX + name)
            if accumulators[name].shape != value.shape:
                raise CheckpointError(f"累加器 {name} 的形状与参数不一致", tensor=ACCUMULATOR_PREFIX + name)
        accumulators = {name: accumulators[name] for name in params}
    elif accumulators:
        name = next(iter(accumulators))
        raise CheckpointError("clipped_sgd 不应携带累加器", tensor=ACCUMULATOR_PREFIX + name)

    config = {key[len(CONFIG_PREFIX):]: value for key, value in metadata.items() if key.startswith(CONFIG_PREFIX)}
    return Checkpoint(
        spec=spec,
        params=params,
        optimizer=OptimizerState(config=optim_config, accumulators=accumulators, step=_int(metadata, "optim.step")),
        epoch=_int(metadata, "train.epoch"),
        best_valid_loss=_float(metadata, "train.best_valid_loss"),
        best_epoch=_int(metadata, "train.best_epoch"),
        wait=_int(metadata, "train.wait"),
        config=config,
    )
