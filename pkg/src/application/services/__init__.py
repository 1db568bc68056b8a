"""
业务服务层 - 数据、图、训练、评估与梯度校验的协调
"""

from .dataset_service import (
    DatasetService,
    ShapesConfig,
    gen_moving_shapes,
    gen_cyclic_tokens,
    tokens_to_signals,
    cycle_points,
    make_batches,
    get_dataset_service
)
from .graph_service import GraphService, GraphInfo, build_graph, graph_info, get_graph_service
from .evaluation_service import EvaluationService, EvalReport, evaluate_batches, get_evaluation_service
from .gradcheck_service import GradcheckService, GradcheckReport, get_gradcheck_service
from .training_service import (
    TrainingService,
    TrainConfig,
    TrainResult,
    ResumeState,
    train_loop,
    get_training_service
)

__all__ = [
    'DatasetService',
    'ShapesConfig',
    'gen_moving_shapes',
    'gen_cyclic_tokens',
    'tokens_to_signals',
    'cycle_points',
    'make_batches',
    'get_dataset_service',
    'GraphService',
    'GraphInfo',
    'build_graph',
    'graph_info',
    'get_graph_service',
    'EvaluationService',
    'EvalReport',
    'evaluate_batches',
    'get_evaluation_service',
    'GradcheckService',
    'GradcheckReport',
    'get_gradcheck_service',
    'TrainingService',
    'TrainConfig',
    'TrainResult',
    'ResumeState',
    'train_loop',
    'get_training_service'
]
