"""
梯度校验服务
对指定单元类型运行随机有限差分试验：单步 cell_backward 与端到端 BPTT
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.core.cells import CellKind
from src.core.gradient_check import (
    GRADIENT_TOLERANCE,
    bptt_gradient_errors,
    cell_gradient_errors,
    max_error,
    random_cell_instance,
    random_model_instance,
    worst_tensor,
)
from src.infrastructure import get_logger, performance_monitor
from src.infrastructure.utilities import parallel_map
from src.shared.exceptions import CellError

DEFAULT_TRIALS = 20


@dataclass(frozen=True)
class TrialResult:
    trial: int
    cell_error: float
    cell_worst: Optional[str]
    bptt_error: float
    bptt_worst: Optional[str]

    @property
    def max_error(self) -> float:
        return max(self.cell_error, self.bptt_error)


@dataclass(frozen=True)
class GradcheckReport:
    kind: CellKind
    seed: int
    trials: List[TrialResult]
    tolerance: float = GRADIENT_TOLERANCE

    @property
    def max_error(self) -> float:
        return max((t.max_error for t in self.trials), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def worst(self) -> Optional[TrialResult]:
        return max(self.trials, key=lambda t: t.max_error) if self.trials else None

    def lines(self):
        yield f"cell = {self.kind.value}"
        yield f"trials = {len(self.trials)}"
        yield f"max_relative_error = {self.max_error:.3e}"
        worst = self.worst()
        if worst is not None:
            where = worst.cell_worst if worst.cell_error >= worst.bptt_error else worst.bptt_worst
            yield f"worst = trial {worst.trial}, tensor {where}"
        yield f"result = {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})"


def run_trial(kind: CellKind, seed: int, trial: int, corrupt: bool = False) -> TrialResult:
    """第 trial 次试验，随机数由 (seed, trial) 决定"""
    cell_errors = cell_gradient_errors(random_cell_instance(kind, np.random.default_rng([seed, trial, 0])), corrupt)
    bptt_errors = bptt_gradient_errors(random_model_instance(kind, np.random.default_rng([seed, trial, 1])), corrupt)
    return TrialResult(
        trial=trial,
        cell_error=max_error(cell_errors),
        cell_worst=worst_tensor(cell_errors),
        bptt_error=max_error(bptt_errors),
        bptt_worst=worst_tensor(bptt_errors),
    )


class GradcheckService:
    """梯度校验服务"""

    def __init__(self, logger_service=None):
        self.logger = logger_service or get_logger()

    @performance_monitor()
    def run(self,
            kind: str,
            seed: int = 0,
            trials: int = DEFAULT_TRIALS,
            corrupt: bool = False,
            max_workers: Optional[int] = None) -> GradcheckReport:
        """
        Args:
            kind: 单元类型
            seed: 随机种子
            trials: 试验次数（≥ 1）
            corrupt: 测试钩子，故意扰动解析梯度
            max_workers: 线程数上限，缺省取 GCRN_THREADS
        """
        try:
            kind = CellKind(kind)
        except ValueError:
            raise CellError(f"未知的单元类型 {kind}，可选 {[k.value for k in CellKind]}")
        if trials < 1:
            raise CellError(f"trials 必须 ≥ 1，得到 {trials}")

        results = parallel_map(lambda trial: run_trial(kind, seed, trial, corrupt), range(trials), max_workers)
        report = GradcheckReport(kind=kind, seed=seed, trials=results)
        log = self.logger.info if report.passed else self.logger.warning
        log(f"梯度校验 {kind.value}: {'通过' if report.passed else '失败'}", extra={
            "seed": seed, "trials": trials, "max_relative_error": report.max_error, "corrupt": corrupt,
        })
        return report


_gradcheck_service: Optional[GradcheckService] = None


def get_gradcheck_service() -> GradcheckService:
    global _gradcheck_service
    if _gradcheck_service is None:
        _gradcheck_service = GradcheckService()
    return _gradcheck_service
