"""
gcrn 命令行入口

    gcrn train --config <path> [--resume <ckpt>]
    gcrn eval --checkpoint <ckpt> --data <path> [--rollout <k>]
    gcrn gradcheck --cell <kind> [--seed <s>] [--trials <m>]
    gcrn gen shapes|tokens --out <path> [...]
    gcrn graph build --points <file> --k <k> [--metric <m>] --out <file>
    gcrn graph info --graph <file>

退出码：0 成功，1 校验未通过，2 用法/校验错误，3 数值失败
"""

import argparse
import sys
from typing import List, Optional

from src.application.services.dataset_service import SHAPE_KINDS, ShapesConfig
from src.application.services.gradcheck_service import DEFAULT_TRIALS
from src.core.cells import CellKind
from src.infrastructure import get_logger, initialize_infrastructure
from src.presentation.controllers.cli_controller import (
    EXIT_NUMERIC,
    EXIT_USAGE,
    CLIController,
)
from src.shared.exceptions import ConfigError, ConvergenceError, GCRNError, NumericalError

PROG = "gcrn"


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' 不是整数")
    if value < 1:
        raise argparse.ArgumentTypeError(f"必须 ≥ 1，得到 {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' 不是整数")
    if value < 0:
        raise argparse.ArgumentTypeError(f"必须 ≥ 0，得到 {value}")
    return value


def _kernel_width(text: str):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' 既不是正实数也不是 auto")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"kernel width 必须 > 0，得到 {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="图卷积循环网络：训练、评估、梯度校验与数据工具")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="按配置文件训练")
    train.add_argument("--config", required=True, help="key = value 格式的运行配置")
    train.add_argument("--resume", help="续训检查点（通常为 last.ckpt）")

    evaluate = commands.add_parser("eval", help="评估检查点")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", required=True, help="GCRNSEQ / GCRNTOK 数据文件")
    evaluate.add_argument("--rollout", type=_non_negative_int, default=0, help="自回归预测的步数")

    gradcheck = commands.add_parser("gradcheck", help="有限差分梯度校验")
    gradcheck.add_argument("--cell", required=True, choices=[k.value for k in CellKind])
    gradcheck.add_argument("--seed", type=_non_negative_int, default=0)
    gradcheck.add_argument("--trials", type=_positive_int, default=DEFAULT_TRIALS)
    gradcheck.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    gen = commands.add_parser("gen", help="生成合成数据集")
    gen_kinds = gen.add_subparsers(dest="dataset", required=True)
    defaults = ShapesConfig()
    shapes = gen_kinds.add_parser("shapes", help="移动（可旋转）图形序列")
    shapes.add_argument("--out", required=True)
    shapes.add_argument("--patch", type=_positive_int, default=defaults.patch)
    shapes.add_argument("--count", type=_non_negative_int, default=defaults.count)
    shapes.add_argument("--n-shapes", type=_positive_int, default=defaults.n_shapes)
    shapes.add_argument("--kind", choices=SHAPE_KINDS, default=defaults.kind)
    shapes.add_argument("--sprite-size", type=_positive_int, default=defaults.sprite_size)
    shapes.add_argument("--seq-len", type=_positive_int, default=defaults.seq_len)
    shapes.add_argument("--min-speed", type=_non_negative_int, default=defaults.min_speed)
    shapes.add_argument("--max-speed", type=_non_negative_int, default=defaults.max_speed)
    shapes.add_argument("--rotate", action="store_true")
    shapes.add_argument("--max-angular-speed", type=float, default=defaults.max_angular_speed)
    shapes.add_argument("--seed", type=_non_negative_int, default=defaults.seed)

    tokens = gen_kinds.add_parser("tokens", help="确定性循环词序列")
    tokens.add_argument("--out", required=True)
    tokens.add_argument("--vocab", type=_positive_int, default=12)
    tokens.add_argument("--length", type=_non_negative_int, default=2000)
    tokens.add_argument("--start", type=_non_negative_int, default=0)

    graph = commands.add_parser("graph", help="图文件工具")
    graph_actions = graph.add_subparsers(dest="action", required=True)
    build = graph_actions.add_parser("build", help="由点集构建 knn 图")
    build.add_argument("--points", required=True)
    build.add_argument("--k", type=_positive_int, required=True)
    build.add_argument("--metric", choices=["euclidean", "cosine"], default="cosine")
    build.add_argument("--kernel-width", type=_kernel_width, default="auto")
    build.add_argument("--out", required=True)
    info = graph_actions.add_parser("info", help="图统计信息")
    info.add_argument("--graph", required=True)
    return parser


def dispatch(controller: CLIController, args: argparse.Namespace) -> int:
    if args.command == "train":
        return controller.train(args.config, args.resume)
    if args.command == "eval":
        return controller.evaluate(args.checkpoint, args.data, args.rollout)
    if args.command == "gradcheck":
        return controller.gradcheck(args.cell, args.seed, args.trials, args.corrupt_gradient)
    if args.command == "gen" and args.dataset == "shapes":
        config = ShapesConfig(
            patch=args.patch, n_shapes=args.n_shapes, kind=args.kind, sprite_size=args.sprite_size,
            min_speed=args.min_speed, max_speed=args.max_speed, rotate=args.rotate,
            max_angular_speed=args.max_angular_speed, seq_len=args.seq_len, count=args.count, seed=args.seed,
        )
        return controller.gen_shapes(args.out, config)
    if args.command == "gen":
        return controller.gen_tokens(args.out, args.vocab, args.length, args.start)
    if args.action == "build":
        return controller.graph_build(args.points, args.k, args.metric, args.out, args.kernel_width)
    return controller.graph_info(args.graph)


def main(argv: Optional[List[str]] = None) -> int:
    """解析参数并执行，返回退出码（不调用 sys.exit）"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse 用法错误为 2，--help 为 0
        return int(e.code or 0)

    try:
        initialize_infrastructure()
    except ConfigError as e:
        sys.stderr.write(f"{PROG}: {e}\n")
        return EXIT_USAGE
    logger = get_logger()
    controller = CLIController(logger)
    try:
        return dispatch(controller, args)
    except (NumericalError, ConvergenceError) as e:
        logger.error(f"数值失败: {e}", extra={"command": args.command})
        sys.stderr.write(f"{PROG}: 数值失败: {e}\n")
        return EXIT_NUMERIC
    except (GCRNError, ValueError) as e:
        logger.error(f"参数或输入非法: {e}", extra={"command": args.command})
        sys.stderr.write(f"{PROG}: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        name = getattr(e, "filename", None)
        message = f"无法访问文件 {name}: {e.strerror}" if name else str(e)
        logger.error(message, extra={"command": args.command})
        sys.stderr.write(f"{PROG}: {message}\n")
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
