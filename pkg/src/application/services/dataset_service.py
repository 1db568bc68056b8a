"""
数据服务
合成移动（可旋转）图形序列、循环词序列，词 id 到 one-hot 图信号的转换，
以及按固定展开长度切窗、打乱、分批
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from src.core.datasets import SequenceDataset, TokenDataset
from src.core.model import SequenceBatch
from src.infrastructure import get_logger
from src.infrastructure.config.run_config import RunConfig
from src.infrastructure.serialization import load_dataset
from src.infrastructure.utilities import get_utility_service
from src.shared.exceptions import DataError

Dataset = Union[SequenceDataset, TokenDataset]
SeedLike = Union[int, Sequence[int]]

SHAPE_KINDS = ("square", "cross", "glyph")


@dataclass(frozen=True)
class ShapesConfig:
    """移动图形生成配置

    速度为每帧整数像素，各分量绝对值在 [min_speed, max_speed] 内，符号随机；
    角速度（弧度/帧）在 [-max_angular_speed, max_angular_speed] 内均匀抽取。
    """
    patch: int = 16
    n_shapes: int = 2
    kind: str = "square"
    sprite_size: int = 4
    min_speed: int = 1
    max_speed: int = 2
    rotate: bool = False
    max_angular_speed: float = 0.3
    seq_len: int = 20
    count: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise DataError(f"未知的图形类型 {self.kind}，可选 {SHAPE_KINDS}")
        for name in ("patch", "n_shapes", "sprite_size", "seq_len"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} 必须 ≥ 1，得到 {getattr(self, name)}")
        if self.count < 0:
            raise DataError(f"count 必须 ≥ 0，得到 {self.count}")
        if self.sprite_size > self.patch:
            raise DataError(f"图形尺寸 {self.sprite_size} 大于 patch {self.patch}")
        if not 0 <= self.min_speed <= self.max_speed:
            raise DataError(f"速度范围非法: [{self.min_speed}, {self.max_speed}]")
        if self.max_angular_speed < 0:
            raise DataError("max_angular_speed 必须 ≥ 0")

    @property
    def n(self) -> int:
        return self.patch * self.patch


@dataclass(frozen=True)
class ShapeMotion:
    """单个图形的初始状态；位置为包围盒左上角 (row, col)"""
    sprite: np.ndarray
    position: Tuple[int, int]
    velocity: Tuple[int, int]
    angle: float = 0.0
    angular_velocity: float = 0.0


def make_sprite(kind: str, size: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """size×size 的二值图形"""
    if kind == "square":
        return np.ones((size, size))
    if kind == "cross":
        sprite = np.zeros((size, size))
        lo, hi = (size - 1) // 2, size // 2 + 1
        sprite[lo:hi, :] = 1.0
        sprite[:, lo:hi] = 1.0
        return sprite
    if kind == "glyph":
        rng = rng or np.random.default_rng(0)
        sprite = (rng.random((size, size)) < 0.5).astype(np.float64)
        if not sprite.any():
            sprite[size // 2, size // 2] = 1.0
        return sprite
    raise DataError(f"未知的图形类型 {kind}")


def _reflect(position: int, velocity: int, span: int) -> Tuple[int, int]:
    """一维弹性反弹；span 为包围盒左上角可取的最大坐标"""
    if span == 0:
        return 0, velocity
    position += velocity
    while position < 0 or position > span:
        if position < 0:
            position = -position
        else:
            position = 2 * span - position
        velocity = -velocity
    return position, velocity


def trajectory(position: Tuple[int, int], velocity: Tuple[int, int],
               sprite_size: int, patch: int, steps: int) -> List[Tuple[int, int]]:
    """每帧包围盒左上角位置；第 0 帧为初始位置"""
    span = patch - sprite_size
    if not (0 <= position[0] <= span and 0 <= position[1] <= span):
        raise DataError(f"初始位置 {position} 使图形超出 {patch}×{patch} 区域")
    (r, c), (vr, vc) = position, velocity
    positions = [(r, c)]
    for _ in range(steps - 1):
        r, vr = _reflect(r, vr, span)
        c, vc = _reflect(c, vc, span)
        positions.append((r, c))
    return positions


def rotate_sprite(sprite: np.ndarray, angle: float) -> np.ndarray:
    """绕图形中心双线性旋转（弧度），结果截断到 [0, 1]"""
    if angle == 0.0:
        return sprite
    rotated = ndimage.rotate(sprite, math.degrees(angle), reshape=False, order=1, mode="constant", cval=0.0)
    return np.clip(rotated, 0.0, 1.0)


def render_sequence(motions: Sequence[ShapeMotion], patch: int, steps: int) -> np.ndarray:
    """渲染 steps 帧，返回 steps × patch × patch；重叠处取逐元素最大值"""
    frames = np.zeros((steps, patch, patch))
    for motion in motions:
        size = motion.sprite.shape[0]
        for t, (r, c) in enumerate(trajectory(motion.position, motion.velocity, size, patch, steps)):
            sprite = rotate_sprite(motion.sprite, motion.angle + t * motion.angular_velocity)
            window = frames[t, r:r + size, c:c + size]
            np.maximum(window, sprite, out=window)
    return frames


def _random_motion(config: ShapesConfig, rng: np.random.Generator) -> ShapeMotion:
    span = config.patch - config.sprite_size
    sprite = make_sprite(config.kind, config.sprite_size, rng)
    position = (int(rng.integers(0, span + 1)), int(rng.integers(0, span + 1)))
    speeds = rng.integers(config.min_speed, config.max_speed + 1, size=2)
    signs = rng.choice([-1, 1], size=2)
    angle, angular_velocity = 0.0, 0.0
    if config.rotate:
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        angular_velocity = float(rng.uniform(-config.max_angular_speed, config.max_angular_speed))
    return ShapeMotion(sprite, position, (int(speeds[0] * signs[0]), int(speeds[1] * signs[1])),
                       angle, angular_velocity)


def gen_moving_shapes(config: ShapesConfig) -> SequenceDataset:
    """生成 count 条序列，每帧 n = patch² 个顶点（行主序 r·patch + c），d = 1"""
    rng = np.random.default_rng(config.seed)
    frames = np.zeros((config.count, config.seq_len, config.n, 1))
    for s in range(config.count):
        motions = [_random_motion(config, rng) for _ in range(config.n_shapes)]
        sequence = render_sequence(motions, config.patch, config.seq_len)
        frames[s] = sequence.reshape(config.seq_len, config.n, 1)
    return SequenceDataset(frames)


def tokens_to_signals(ids: Sequence[int], vocab: int) -> np.ndarray:
    """词 id 序列 → T × V × 1 的 one-hot 图信号"""
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise DataError(f"词 id 必须为一维序列，得到形状 {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)][0]
        raise DataError(f"词 id {bad} 超出词表 [0, {vocab})")
    signals = np.zeros((ids.size, vocab, 1))
    signals[np.arange(ids.size), ids.astype(np.int64), 0] = 1.0
    return signals


def gen_cyclic_tokens(vocab: int, length: int, start: int = 0) -> TokenDataset:
    """确定性循环序列 (start + t) mod V"""
    if length < 0:
        raise DataError(f"length 必须 ≥ 0，得到 {length}")
    return TokenDataset(vocab, (start + np.arange(length)) % vocab)


def cycle_points(vocab: int) -> np.ndarray:
    """词表在单位圆上的嵌入，第 i 个词位于角度 2πi/V"""
    angles = 2.0 * math.pi * np.arange(vocab) / vocab
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _windows(dataset: Dataset, unroll: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    if unroll < 1:
        raise DataError(f"unroll 必须 ≥ 1，得到 {unroll}")
    if isinstance(dataset, TokenDataset):
        sequences = [dataset.ids] if dataset.count else []
        seq_len = dataset.count
    else:
        sequences = list(dataset.frames)
        seq_len = dataset.seq_len
    if sequences and seq_len < unroll + 1:
        raise DataError(f"序列长度 {seq_len} 小于 unroll + 1 = {unroll + 1}")

    windows = []
    for sequence in sequences:
        for w in range((seq_len - 1) // unroll):
            lo = w * unroll
            inputs, targets = sequence[lo:lo + unroll], sequence[lo + 1:lo + unroll + 1]
            if isinstance(dataset, TokenDataset):
                inputs = tokens_to_signals(inputs, dataset.vocab)
            windows.append((inputs, targets))
    return windows


def make_batches(dataset: Dataset,
                 batch_size: int,
                 unroll: int,
                 seed: Optional[SeedLike] = None,
                 graph_id: Optional[str] = None) -> List[SequenceBatch]:
    """切成互不重叠的连续窗口（目标为输入右移一步），打乱后按 batch_size 分批

    每条序列末尾不足一个窗口的帧被丢弃；最后一个批次可以不满。
    seed 为 None 时保持窗口原始顺序。
    """
    if batch_size < 1:
        raise DataError(f"batch_size 必须 ≥ 1，得到 {batch_size}")
    windows = _windows(dataset, unroll)
    order = np.arange(len(windows))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(windows))

    batches = []
    for group in get_utility_service().split_into_batches(list(order), batch_size):
        chosen = [windows[i] for i in group]
        inputs = np.stack([w[0] for w in chosen], axis=1)
        targets = np.stack([w[1] for w in chosen], axis=1)
        batches.append(SequenceBatch(inputs, targets, graph_id))
    return batches


def shapes_config_from_run(run: RunConfig) -> ShapesConfig:
    s = run.shapes
    return ShapesConfig(
        patch=s.patch, n_shapes=s.n_shapes, kind=s.kind, sprite_size=s.sprite_size,
        min_speed=s.min_speed, max_speed=s.max_speed, rotate=s.rotate,
        max_angular_speed=s.max_angular_speed, seq_len=s.seq_len, count=s.count, seed=s.seed,
    )


class DatasetService:
    """数据服务：按运行配置生成或读取训练/验证数据"""

    def __init__(self, logger_service=None):
        self.logger = logger_service or get_logger()

    def generate_shapes(self, config: ShapesConfig) -> SequenceDataset:
        dataset = gen_moving_shapes(config)
        self.logger.info("生成移动图形数据集", extra={
            "count": config.count, "seq_len": config.seq_len, "patch": config.patch,
            "kind": config.kind, "rotate": config.rotate, "seed": config.seed,
        })
        return dataset

    def generate_tokens(self, vocab: int, length: int, start: int = 0) -> TokenDataset:
        dataset = gen_cyclic_tokens(vocab, length, start)
        self.logger.info("生成循环词序列", extra={"vocab": vocab, "length": length, "start": start})
        return dataset

    def load(self, path: str) -> Dataset:
        dataset = load_dataset(path)
        self.logger.info(f"读取数据集: {path}", extra={"type": type(dataset).__name__, "count": dataset.count})
        return dataset

    def build_datasets(self, run: RunConfig) -> Tuple[Dataset, Dataset]:
        """返回 (train, valid)"""
        if run.data.source == "file":
            train, valid = self.load(run.data.train), self.load(run.data.valid)
        elif run.task == "tokens":
            train = self.generate_tokens(run.tokens.vocab, run.tokens.length)
            # 验证集接续训练流
            valid = self.generate_tokens(run.tokens.vocab, run.tokens.valid_length,
                                         start=run.tokens.length % run.tokens.vocab)
        else:
            train, valid = self.generate_shapes(shapes_config_from_run(run)).split(run.data.valid_fraction)

        expected = TokenDataset if run.task == "tokens" else SequenceDataset
        for name, dataset in (("train", train), ("valid", valid)):
            if not isinstance(dataset, expected):
                raise DataError(f"{name} 数据集类型 {type(dataset).__name__} 与任务 {run.task} 不符")
        return train, valid


_dataset_service: Optional[DatasetService] = None


def get_dataset_service() -> DatasetService:
    global _dataset_service
    if _dataset_service is None:
        _dataset_service = DatasetService()
    return _dataset_service
