"""
评估服务
教师强制 / 自回归 rollout 的逐步损失，按批并行、按输入顺序归约
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from src.core.datasets import SequenceDataset, TokenDataset
from src.core.graph import Graph
from src.core.losses import perplexity
from src.core.model import ModelSpec, Params, SequenceBatch, forward_losses
from src.core.sparse_linalg import SparseMatrix
from src.infrastructure import get_logger, performance_monitor
from src.infrastructure.config.run_config import RunConfig, run_config_from_flat
from src.infrastructure.serialization import Checkpoint, load_checkpoint, load_dataset
from src.infrastructure.utilities import get_utility_service, parallel_map
from src.shared.exceptions import CheckpointError, DataError

from .dataset_service import make_batches
from .graph_service import build_graph


@dataclass
class EvalReport:
    """平均损失、词任务困惑度与每一步的平均损失"""
    loss: float
    perplexity: Optional[float] = None
    step_losses: List[float] = field(default_factory=list)
    windows: int = 0
    rollout: int = 0

    def lines(self):
        yield f"loss = {self.loss:.17g}"
        if self.perplexity is not None:
            yield f"perplexity = {self.perplexity:.17g}"
        if self.rollout:
            for t, value in enumerate(self.step_losses):
                yield f"step {t} loss = {value:.17g}"


def evaluate_batches(spec: ModelSpec,
                     params: Params,
                     batches: Sequence[SequenceBatch],
                     L: Optional[SparseMatrix],
                     rollout: int = 0,
                     max_workers: Optional[int] = None) -> EvalReport:
    """在若干批上评估（无 dropout）

    各批的逐步损失按批大小加权、按批次顺序归约，结果与线程数无关。
    """
    if not batches:
        raise DataError("评估数据为空，无法切出任何窗口")
    steps = batches[0].steps
    if any(batch.steps != steps for batch in batches):
        raise DataError("评估批次的时间长度不一致")

    per_batch = parallel_map(lambda batch: forward_losses(spec, params, batch, L, rollout), batches, max_workers)
    total = sum(batch.size for batch in batches)
    step_losses = [
        math.fsum(batch.size * losses[t] for batch, losses in zip(batches, per_batch)) / total
        for t in range(steps)
    ]
    loss = math.fsum(step_losses) / steps
    return EvalReport(
        loss=loss,
        perplexity=perplexity(loss) if spec.is_token_task else None,
        step_losses=step_losses,
        windows=total,
        rollout=rollout,
    )


def check_compatible(spec: ModelSpec, graph: Optional[Graph], dataset) -> None:
    """模型、图与数据集的顶点数和特征维度必须一致"""
    if graph is not None and graph.n != spec.cell.n:
        raise DataError(f"图的顶点数 {graph.n} 与模型 n={spec.cell.n} 不一致")
    if isinstance(dataset, TokenDataset):
        if not spec.is_token_task:
            raise DataError("帧预测模型不能在词数据集上评估")
        if dataset.vocab != spec.vocab:
            raise DataError(f"数据集词表大小 {dataset.vocab} 与模型 V={spec.vocab} 不一致")
    elif isinstance(dataset, SequenceDataset):
        if spec.is_token_task:
            raise DataError("词模型不能在帧数据集上评估")
        if dataset.count and (dataset.n != spec.cell.n or dataset.d != spec.cell.d_x):
            raise DataError(
                f"数据集帧形状 n={dataset.n}, d={dataset.d} 与模型 n={spec.cell.n}, d_x={spec.cell.d_x} 不一致"
            )


class EvaluationService:
    """评估服务"""

    def __init__(self, logger_service=None):
        self.logger = logger_service or get_logger()

    def run_config_of(self, checkpoint: Checkpoint) -> RunConfig:
        if not checkpoint.config:
            raise CheckpointError("检查点不含运行配置，无法重建图")
        return run_config_from_flat(checkpoint.config)

    @performance_monitor()
    def evaluate_checkpoint(self, checkpoint_path: str, data_path: str, rollout: int = 0) -> EvalReport:
        """用检查点中的模型与配置，在 data_path 数据上评估"""
        checkpoint = load_checkpoint(checkpoint_path)
        run = self.run_config_of(checkpoint)
        spec = checkpoint.spec
        graph = build_graph(run)
        dataset = load_dataset(data_path)
        check_compatible(spec, graph, dataset)

        batches = make_batches(dataset, run.train.batch_size, run.train.unroll)
        L = graph.scaled_laplacian if spec.cell.kind.uses_graph else None
        report = evaluate_batches(spec, checkpoint.params, batches, L, rollout)
        self.logger.info("评估完成", extra={
            "checkpoint": checkpoint_path, "sha256": get_utility_service().calculate_file_hash(checkpoint_path)[:12],
            "data": data_path, "rollout": rollout,
            "loss": report.loss, "perplexity": report.perplexity, "windows": report.windows,
        })
        return report


_evaluation_service: Optional[EvaluationService] = None


def get_evaluation_service() -> EvaluationService:
    global _evaluation_service
    if _evaluation_service is None:
        _evaluation_service = EvaluationService()
    return _evaluation_service
