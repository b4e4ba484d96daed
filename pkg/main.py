import argparse
import sys
from typing import Optional

from core.commands import (
    CHECK_KINDS, apply_overrides, cmd_check, cmd_fold_to_germ, cmd_germ_to_fold, cmd_ideal, cmd_lefschetz, cmd_model,
    cmd_roundtrip, cmd_samples, cmd_verify, load_manifest, model_names, parse_grid,
)
from core.config_manager import get_config
from core.errors import CertificationError, FoldcalcError
from core.utils.logger import error, exception, info, set_console_level

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def _common() -> argparse.ArgumentParser:
    """
    所有子命令共享的参数
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="清单文件路径，缺省或 - 时读标准输入")
    common.add_argument("--grid", help="每轴采样点数，如 17 或 9,9,5")
    common.add_argument("--tol", type=float, help="判定容差")
    common.add_argument("--seed", type=int, help="随机性质检验的种子（默认 0）")
    common.add_argument("--threads", type=int, help="并行线程数（0 为 CPU 核数）")
    common.add_argument("--report", help="报告输出路径（同时写出 .txt 摘要）")
    common.add_argument("--format", choices=("json", "text"), help="标准输出上的报告格式")
    common.add_argument("--verbose", "-v", action="store_true", help="在 stderr 输出 INFO 日志")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="foldcalc", description="折叠辛结构、接触芽与 Lefschetz 单值的数值检验")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="检验几何结构")
    p.add_argument("kind", choices=CHECK_KINDS)
    p.add_argument("manifest_path", nargs="?")
    p.add_argument("--form")
    p.add_argument("--fold")
    p.add_argument("--field")
    p.add_argument("--phi")
    p.add_argument("--points", nargs="*", help="临界点名称")

    p = sub.add_parser("verify", parents=[common], help="执行清单声明的全部检验")
    p.add_argument("manifest_path", nargs="?")

    p = sub.add_parser("model", parents=[common], help="生成内置模型清单")
    p.add_argument("name", choices=model_names())
    p.add_argument("--n", type=int, default=2, help="半维数 n")
    p.add_argument("--eps", type=float, help="领口半宽（collar 模型）")
    p.add_argument("--mu", help="非对称双倍的 μ 表达式")
    p.add_argument("--weinstein", action="store_true", help="double 模型只保留正端（Weinstein 域的双倍）")
    p.add_argument("--out", help="清单输出路径，缺省写标准输出")
    p.add_argument("--verify", action="store_true", help="生成后执行模型的预期检验")

    for name, text in (("fold-to-germ", "折叠辛形式 -> 竖直不变接触芽"),
                       ("germ-to-fold", "接触芽 -> 折叠辛形式"),
                       ("roundtrip", "折叠 -> 芽 -> 折叠 往返比较")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("manifest_path", nargs="?")
        p.add_argument("--form", help="λ 的形式名（germ-to-fold 时为芽名）")
        p.add_argument("--fold")
        p.add_argument("--eps", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--eps-prime", dest="eps_prime", type=float)
        p.add_argument("--out", help="输出清单路径")
        p.add_argument("--raw", action="store_true", help="germ-to-fold 时跳过规范化")

    p = sub.add_parser("ideal", parents=[common], help="理想 Liouville 场与特征叶状结构方向比较")
    p.add_argument("manifest_path", nargs="?")
    p.add_argument("--form", help="芽名")
    p.add_argument("--count", type=int, default=200)

    p = sub.add_parser("samples", parents=[common], help="输出折叠与特征叶状结构点云")
    p.add_argument("manifest_path", nargs="?")
    p.add_argument("--form", help="芽名")
    p.add_argument("--fold")

    p = sub.add_parser("lefschetz", parents=[common], help="Lefschetz 单值的同调检验")
    p.add_argument("action", choices=("check", "stabilize", "search"))
    p.add_argument("manifest_path", nargs="?")
    p.add_argument("--side", choices=("plus", "minus"), default="plus")
    p.add_argument("--budget", type=int, help="稳定化搜索深度")
    return parser


def _emit(report, args):
    if args.report:
        report.write(args.report)
    fmt = args.format or get_config().report_format
    sys.stdout.write((report.summary() if fmt == "text" else report.dumps()) + "\n")


def run(args) -> int:
    apply_overrides(args)
    if args.command == "check":
        report = cmd_check(args)
    elif args.command == "verify":
        report = cmd_verify(load_manifest(args), parse_grid(args.grid), args.tol)
    elif args.command == "model":
        manifest, report = cmd_model(args)
        manifest.write(args.out)
        if report is None:
            return EXIT_PASS
        if args.report:
            report.write(args.report)
        if args.out:
            _emit(report, args)
        else:
            info(report.summary())
        return report.exit_code
    elif args.command in ("fold-to-germ", "germ-to-fold"):
        handler = cmd_fold_to_germ if args.command == "fold-to-germ" else cmd_germ_to_fold
        manifest, report = handler(args)
        if manifest is not None and args.out:
            manifest.write(args.out)
    elif args.command == "roundtrip":
        report = cmd_roundtrip(args)
    elif args.command == "ideal":
        report = cmd_ideal(args)
    elif args.command == "samples":
        report = cmd_samples(args)
    else:
        report = cmd_lefschetz(args)
    _emit(report, args)
    return report.exit_code


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse 的用法错误
        return EXIT_PASS if e.code == 0 else EXIT_INPUT
    if args.verbose:
        set_console_level("INFO")
    try:
        return run(args)
    except CertificationError as e:
        error(f"检验未通过: {e}")
        return EXIT_FAIL
    except (FoldcalcError, OSError) as e:
        error(f"输入错误: {e}")
        return EXIT_INPUT
    except Exception as e:
        exception(f"未预期的错误: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
