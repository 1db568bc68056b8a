"""
数值核心层
稀疏线性代数、图与拉普拉斯、Chebyshev 滤波、循环单元与训练数值（不记录日志、不做 I/O）
"""

from .sparse_linalg import (
    SparseMatrix,
    csr_from_coo,
    from_scipy,
    identity,
    spmm,
    power_iteration_lmax,
    spectral_radius,
)
from .graph import (
    Graph,
    LambdaMaxMode,
    Metric,
    graph_from_edges,
    knn_graph,
    grid_graph,
    normalized_laplacian,
    scale_laplacian,
    hop_distances,
)
from .chebyshev import (
    ChebFilterBank,
    ChebCache,
    chebyshev_basis,
    cheb_mix,
    cheb_coefficient_grad,
    cheb_basis_adjoint,
    cheb_forward,
    cheb_backward,
    cheb_forward_dense_oracle,
    glorot_bound,
)
from .cells import (
    CellKind,
    PeepholeShape,
    CellSpec,
    CellParams,
    CellState,
    param_shapes,
    param_count,
    cell_init,
    zero_state,
    fclstm_step,
    gcrn_m1_step,
    gclstm_m2_step,
    gcrnn_step,
    gcgru_step,
    cell_forward,
    cell_backward,
)
from .losses import binary_cross_entropy, softmax_cross_entropy, perplexity
from .optimizers import (
    OptimizerKind,
    OptimizerConfig,
    OptimizerState,
    init_optimizer_state,
    rmsprop_update,
    clipped_sgd_update,
    optimizer_update,
    clip_by_global_norm,
    global_norm,
    learning_rate_at,
)
from .dropout import dropout_apply, dropout_mask
from .datasets import SequenceDataset, TokenDataset
from .model import (
    Readout,
    ModelSpec,
    SequenceBatch,
    BPTTResult,
    init_model,
    check_params,
    bptt,
    forward_losses,
)

__all__ = [
    # 稀疏线性代数
    'SparseMatrix',
    'csr_from_coo',
    'from_scipy',
    'identity',
    'spmm',
    'power_iteration_lmax',
    'spectral_radius',

    # 图
    'Graph',
    'LambdaMaxMode',
    'Metric',
    'graph_from_edges',
    'knn_graph',
    'grid_graph',
    'normalized_laplacian',
    'scale_laplacian',
    'hop_distances',

    # Chebyshev
    'ChebFilterBank',
    'ChebCache',
    'chebyshev_basis',
    'cheb_mix',
    'cheb_coefficient_grad',
    'cheb_basis_adjoint',
    'cheb_forward',
    'cheb_backward',
    'cheb_forward_dense_oracle',
    'glorot_bound',

    # 单元
    'CellKind',
    'PeepholeShape',
    'CellSpec',
    'CellParams',
    'CellState',
    'param_shapes',
    'param_count',
    'cell_init',
    'zero_state',
    'fclstm_step',
    'gcrn_m1_step',
    'gclstm_m2_step',
    'gcrnn_step',
    'gcgru_step',
    'cell_forward',
    'cell_backward',

    # 训练数值
    'binary_cross_entropy',
    'softmax_cross_entropy',
    'perplexity',
    'OptimizerKind',
    'OptimizerConfig',
    'OptimizerState',
    'init_optimizer_state',
    'rmsprop_update',
    'clipped_sgd_update',
    'optimizer_update',
    'clip_by_global_norm',
    'global_norm',
    'learning_rate_at',
    'dropout_apply',
    'dropout_mask',
    'Readout',
    'ModelSpec',
    'SequenceBatch',
    'BPTTResult',
    'init_model',
    'check_params',
    'bptt',
    'forward_losses',

    # 数据集
    'SequenceDataset',
    'TokenDataset',
]
