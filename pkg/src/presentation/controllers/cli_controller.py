"""
命令行控制器
每个子命令一个方法：调用应用服务，结果写到标准输出，返回退出码
"""

import sys
from typing import Iterable, Optional, TextIO

from src.application.services.dataset_service import DatasetService, ShapesConfig
from src.application.services.evaluation_service import EvaluationService
from src.application.services.gradcheck_service import GradcheckService
from src.application.services.graph_service import GraphService
from src.application.services.training_service import TrainingService
from src.infrastructure.config.run_config import load_run_config
from src.infrastructure.serialization import save_dataset

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class CLIController:
    """命令行控制器

    负责把解析后的参数交给对应的服务；异常由 cli.main 统一映射为退出码。
    """

    def __init__(self, logger, stream: Optional[TextIO] = None,
                 training_service=None, evaluation_service=None,
                 gradcheck_service=None, dataset_service=None, graph_service=None):
        """
        Args:
            logger: 日志服务
            stream: 结果输出流，缺省为调用时的 sys.stdout
        """
        self.logger = logger
        self._stream = stream
        self.dataset_service = dataset_service or DatasetService(logger)
        self.graph_service = graph_service or GraphService(logger)
        self.training_service = training_service or TrainingService(
            logger, dataset_service=self.dataset_service, graph_service=self.graph_service
        )
        self.evaluation_service = evaluation_service or EvaluationService(logger)
        self.gradcheck_service = gradcheck_service or GradcheckService(logger)

    def _emit(self, lines: Iterable[str]) -> None:
        stream = self._stream or sys.stdout
        for line in lines:
            stream.write(line + "\n")
        stream.flush()

    def train(self, config_path: str, resume: Optional[str] = None) -> int:
        run = load_run_config(config_path)
        result = self.training_service.train(run, resume_path=resume)
        self._emit([
            f"output = {run.output.dir}",
            f"epochs_run = {result.epochs_run}",
            f"steps = {result.steps}",
            f"best_epoch = {result.best_epoch}",
            f"best_valid_loss = {result.best_valid_loss:.17g}",
            f"stopped_early = {'true' if result.stopped_early else 'false'}",
        ])
        return EXIT_OK

    def evaluate(self, checkpoint: str, data: str, rollout: int = 0) -> int:
        report = self.evaluation_service.evaluate_checkpoint(checkpoint, data, rollout)
        self._emit(report.lines())
        return EXIT_OK

    def gradcheck(self, cell: str, seed: int, trials: int, corrupt: bool = False) -> int:
        report = self.gradcheck_service.run(cell, seed=seed, trials=trials, corrupt=corrupt)
        self._emit(report.lines())
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    def gen_shapes(self, out: str, config: ShapesConfig) -> int:
        dataset = self.dataset_service.generate_shapes(config)
        save_dataset(out, dataset)
        self._emit([f"wrote {out}", f"sequences = {dataset.count}", f"n = {config.n}"])
        return EXIT_OK

    def gen_tokens(self, out: str, vocab: int, length: int, start: int = 0) -> int:
        dataset = self.dataset_service.generate_tokens(vocab, length, start)
        save_dataset(out, dataset)
        self._emit([f"wrote {out}", f"vocab = {vocab}", f"count = {dataset.count}"])
        return EXIT_OK

    def graph_build(self, points: str, k: int, metric: str, out: str, kernel_width="auto") -> int:
        graph = self.graph_service.build_from_points(points, k, metric, out_path=out, kernel_width=kernel_width)
        self._emit([f"wrote {out}", f"n = {graph.n}", f"edges = {graph.edge_count}"])
        return EXIT_OK

    def graph_info(self, path: str) -> int:
        self._emit(self.graph_service.info(path).lines())
        return EXIT_OK
