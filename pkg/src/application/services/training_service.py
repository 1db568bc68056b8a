"""
训练服务
训练循环（逐 epoch 的训练/验证指标、早停、最优检查点、可续训）
以及由运行配置驱动的一次完整训练
"""

import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from src.core.cells import CellSpec
from src.core.graph import Graph
from src.core.losses import perplexity
from src.core.model import ModelSpec, Params, bptt, check_params, init_model
from src.core.optimizers import OptimizerConfig, OptimizerState, init_optimizer_state, optimizer_update
from src.core.sparse_linalg import SparseMatrix
from src.infrastructure import PerformanceLogger, get_logger, performance_monitor
from src.infrastructure.config.run_config import RunConfig
from src.infrastructure.monitoring import MetricRecord, MetricsService, create_metrics_service
from src.infrastructure.serialization import Checkpoint, load_checkpoint, save_checkpoint
from src.infrastructure.utilities import ProgressTracker, get_utility_service
from src.shared.exceptions import ConfigError, DataError, GraphError

from .dataset_service import Dataset, DatasetService, make_batches
from .evaluation_service import check_compatible, evaluate_batches
from .graph_service import GraphService

BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
METRICS_FILE = "metrics.csv"


@dataclass(frozen=True)
class TrainConfig:
    """训练超参数；dropout_keep 为保留概率"""
    unroll_steps: int = 19
    batch_size: int = 8
    epochs: int = 10
    dropout_keep: float = 1.0
    early_stop_patience: int = 3
    seed: int = 0
    deterministic: bool = True
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.unroll_steps < 1:
            raise ConfigError(f"unroll_steps 必须 ≥ 1，得到 {self.unroll_steps}", key="train.unroll")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size 必须 ≥ 1，得到 {self.batch_size}", key="train.batch_size")
        if self.epochs < 1:
            raise ConfigError(f"epochs 必须 ≥ 1，得到 {self.epochs}", key="train.epochs")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError(f"dropout_keep 必须位于 (0, 1]，得到 {self.dropout_keep}", key="train.dropout_keep")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience 必须 ≥ 0", key="train.patience")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps 必须 ≥ 1", key="train.max_steps")


@dataclass
class ResumeState:
    """续训起点：epoch 为已完成的最后一个 epoch"""
    params: Params
    optimizer: OptimizerState
    epoch: int
    best_params: Params
    best_epoch: int
    best_valid_loss: float
    wait: int


@dataclass
class EpochState:
    """每个 epoch 结束时的完整训练状态"""
    epoch: int
    params: Params
    optimizer: OptimizerState
    best_params: Params
    best_epoch: int
    best_valid_loss: float
    wait: int
    improved: bool
    train_loss: float
    valid_loss: float


@dataclass
class TrainResult:
    best_params: Params
    last_params: Params
    history: List[MetricRecord]
    best_epoch: int
    best_valid_loss: float
    optimizer_state: OptimizerState
    epochs_run: int
    stopped_early: bool = False
    steps: int = 0


def _check_graph(spec: ModelSpec, L: Optional[SparseMatrix]) -> None:
    if L is None:
        if spec.cell.kind.uses_graph:
            raise GraphError(f"{spec.cell.kind.value} 需要缩放拉普拉斯")
        return
    if L.n_rows != spec.cell.n:
        raise GraphError(f"拉普拉斯为 {L.n_rows}×{L.n_cols}，与模型 n={spec.cell.n} 不一致")


def train_loop(spec: ModelSpec,
               train: Dataset,
               valid: Dataset,
               L: Optional[SparseMatrix],
               config: TrainConfig,
               optimizer: OptimizerConfig,
               metrics: Optional[MetricsService] = None,
               resume: Optional[ResumeState] = None,
               on_epoch: Optional[Callable[[EpochState], None]] = None,
               logger_service=None,
               max_workers: Optional[int] = None) -> TrainResult:
    """训练循环

    每个 epoch 的打乱与 dropout 随机数分别由 (seed, epoch) 与 (seed, epoch, 1) 播种，
    因此从 epoch e 的检查点续训与不间断训练逐位一致。
    验证损失未严格下降的 epoch 使 wait 加一，wait > patience 时停止。

    Raises:
        DataError / ShapeError / GraphError: 数据、图与模型不匹配（在第 0 个 epoch 之前）
        NumericalError: 损失或梯度出现非有限值
    """
    logger = logger_service or get_logger()
    performance = PerformanceLogger(logger)
    metrics = metrics or create_metrics_service(deterministic=config.deterministic, logger_service=logger)

    # 第 0 个 epoch 之前完成所有一致性检查
    _check_graph(spec, L)
    check_compatible(spec, None, train)
    check_compatible(spec, None, valid)
    if not make_batches(train, config.batch_size, config.unroll_steps):
        raise DataError("训练集为空，无法切出任何窗口")
    valid_batches = make_batches(valid, config.batch_size, config.unroll_steps)
    if not valid_batches:
        raise DataError("验证集为空，无法切出任何窗口")

    if resume is None:
        params = init_model(spec, config.seed)
        opt_state = init_optimizer_state(optimizer, params)
        best_params, best_epoch, best_valid_loss, wait = params, 0, math.inf, 0
        start_epoch = 0
    else:
        check_params(spec, resume.params)
        params, opt_state = resume.params, resume.optimizer
        best_params, best_epoch = resume.best_params, resume.best_epoch
        best_valid_loss, wait = resume.best_valid_loss, resume.wait
        start_epoch = resume.epoch + 1

    history: List[MetricRecord] = []
    stopped_early = False
    epochs_run = 0
    for epoch in range(start_epoch, config.epochs):
        if config.max_steps is not None and opt_state.step >= config.max_steps:
            break
        started = time.perf_counter()
        batches = make_batches(train, config.batch_size, config.unroll_steps, seed=[config.seed, epoch])
        dropout_rng = np.random.default_rng([config.seed, epoch, 1])
        progress = ProgressTracker(len(batches), f"epoch {epoch} 训练", logger)

        weighted, seen = [], 0
        for index, batch in enumerate(batches):
            if config.max_steps is not None and opt_state.step >= config.max_steps:
                break
            result = bptt(spec, params, batch, L, config.dropout_keep, dropout_rng)
            params, opt_state = optimizer_update(params, result.grads, opt_state, epoch)
            weighted.append(batch.size * result.loss)
            seen += batch.size
            logger.debug(f"epoch {epoch} batch {index}", extra={"loss": result.loss, "step": opt_state.step})
            progress.update()
        train_loss = math.fsum(weighted) / seen
        train_ms = (time.perf_counter() - started) * 1000.0

        started = time.perf_counter()
        report = evaluate_batches(spec, params, valid_batches, L, max_workers=max_workers)
        valid_ms = (time.perf_counter() - started) * 1000.0
        valid_loss = report.loss

        token_task = spec.is_token_task
        history.append(metrics.record(epoch, "train", train_loss,
                                      perplexity(train_loss) if token_task else None, train_ms))
        history.append(metrics.record(epoch, "valid", valid_loss, report.perplexity, valid_ms))
        metrics.flush()
        performance.log_epoch(epoch, "train", train_loss, train_ms, steps=opt_state.step)
        performance.log_epoch(epoch, "valid", valid_loss, valid_ms, perplexity=report.perplexity)

        improved = valid_loss < best_valid_loss
        if improved:
            best_params, best_epoch, best_valid_loss, wait = params, epoch, valid_loss, 0
        else:
            wait += 1
        epochs_run += 1

        if on_epoch is not None:
            on_epoch(EpochState(epoch, params, opt_state, best_params, best_epoch,
                                best_valid_loss, wait, improved, train_loss, valid_loss))
        if wait > config.early_stop_patience:
            stopped_early = True
            logger.info(f"早停: 验证损失已 {wait} 个 epoch 未改善", extra={"best_epoch": best_epoch})
            break

    return TrainResult(
        best_params=best_params,
        last_params=params,
        history=history,
        best_epoch=best_epoch,
        best_valid_loss=best_valid_loss,
        optimizer_state=opt_state,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
        steps=opt_state.step,
    )


def train_config_from_run(run: RunConfig) -> TrainConfig:
    t = run.train
    return TrainConfig(
        unroll_steps=t.unroll, batch_size=t.batch_size, epochs=t.epochs, dropout_keep=t.dropout_keep,
        early_stop_patience=t.patience, seed=t.seed, deterministic=t.deterministic, max_steps=t.max_steps,
    )


def optimizer_config_from_run(run: RunConfig) -> OptimizerConfig:
    o = run.optim
    return OptimizerConfig(
        kind=o.kind, learning_rate=o.lr, decay_rate=o.decay, epsilon=o.eps,
        max_grad_norm=o.max_grad_norm, lr_decay=o.lr_decay, lr_decay_start=o.lr_decay_start,
    )


def model_spec_for(run: RunConfig, graph: Graph, train: Dataset) -> ModelSpec:
    """顶点数取自图，输入维度取自数据集（词任务为 one-hot，d_x = 1）"""
    d_x = 1 if run.task == "tokens" else (train.d if train.count else 1)
    cell = CellSpec(kind=run.cell.kind, n=graph.n, d_x=d_x, d_h=run.cell.d_h, K=run.cell.K,
                    peepholes=run.cell.peepholes, peephole_shape=run.cell.peephole_shape)
    vocab = getattr(train, "vocab", None) if run.task == "tokens" else None
    return ModelSpec(cell=cell, layers=run.cell.layers, readout=run.model.readout, vocab=vocab)


class TrainingService:
    """训练服务：数据 → 图 → 模型 → 训练循环 → 检查点与 metrics.csv"""

    def __init__(self, logger_service=None, dataset_service=None, graph_service=None, utility_service=None):
        self.logger = logger_service or get_logger()
        self.dataset_service = dataset_service or DatasetService(self.logger)
        self.graph_service = graph_service or GraphService(self.logger)
        self.utility_service = utility_service or get_utility_service()

    def load_resume(self, path: str, spec: ModelSpec) -> ResumeState:
        """读取续训检查点；同目录的 best.ckpt 提供最优参数"""
        checkpoint = load_checkpoint(path, expected_spec=spec)
        best_params = checkpoint.params
        best_path = os.path.join(os.path.dirname(os.path.abspath(path)), BEST_CHECKPOINT)
        if checkpoint.best_epoch != checkpoint.epoch:
            if os.path.isfile(best_path) and os.path.abspath(path) != best_path:
                best = load_checkpoint(best_path, expected_spec=spec)
                if best.epoch == checkpoint.best_epoch:
                    best_params = best.params
                else:
                    self.logger.warning("best.ckpt 与续训检查点记录的最优 epoch 不一致，以续训参数为最优",
                                        extra={"best_epoch": checkpoint.best_epoch, "found": best.epoch})
            else:
                self.logger.warning("未找到 best.ckpt，以续训参数为最优", extra={"path": best_path})
        self.logger.info(f"从检查点续训: {path}", extra={"epoch": checkpoint.epoch, "step": checkpoint.optimizer.step})
        return ResumeState(
            params=checkpoint.params,
            optimizer=checkpoint.optimizer,
            epoch=checkpoint.epoch,
            best_params=best_params,
            best_epoch=checkpoint.best_epoch,
            best_valid_loss=checkpoint.best_valid_loss,
            wait=checkpoint.wait,
        )

    @performance_monitor()
    def train(self, run: RunConfig, resume_path: Optional[str] = None) -> TrainResult:
        """按运行配置训练，输出 metrics.csv、best.ckpt 与 last.ckpt"""
        out_dir = self.utility_service.ensure_directory(run.output.dir)
        train, valid = self.dataset_service.build_datasets(run)
        graph = self.graph_service.build_for_run(run)
        spec = model_spec_for(run, graph, train)
        check_compatible(spec, graph, train)
        config = train_config_from_run(run)
        L = graph.scaled_laplacian if spec.cell.kind.uses_graph else None
        resume = self.load_resume(resume_path, spec) if resume_path else None

        metrics = create_metrics_service(os.path.join(out_dir, METRICS_FILE), deterministic=config.deterministic,
                                         append=resume is not None, logger_service=self.logger)
        if resume is not None:
            metrics.truncate_after(resume.epoch)
        flat: Dict[str, str] = dict(run.to_flat())

        def save_epoch(state: EpochState) -> None:
            checkpoint = Checkpoint(spec=spec, params=state.params, optimizer=state.optimizer, epoch=state.epoch,
                                    best_valid_loss=state.best_valid_loss, best_epoch=state.best_epoch,
                                    wait=state.wait, config=flat)
            save_checkpoint(os.path.join(out_dir, LAST_CHECKPOINT), checkpoint)
            if state.improved:
                save_checkpoint(os.path.join(out_dir, BEST_CHECKPOINT), checkpoint)

        self.logger.info("开始训练", extra={
            "task": run.task, "cell": spec.cell.kind.value, "n": spec.cell.n, "K": spec.cell.K,
            "params": spec.param_count(), "out": out_dir, "resume": resume_path,
        })
        result = train_loop(spec, train, valid, L, config, optimizer_config_from_run(run),
                            metrics=metrics, resume=resume, on_epoch=save_epoch, logger_service=self.logger)
        self.logger.info("训练结束", extra={
            "epochs_run": result.epochs_run, "best_epoch": result.best_epoch,
            "best_valid_loss": result.best_valid_loss, "stopped_early": result.stopped_early,
            "steps": result.steps,
        })
        return result


_training_service: Optional[TrainingService] = None


def get_training_service() -> TrainingService:
    global _training_service
    if _training_service is None:
        _training_service = TrainingService()
    return _training_service
