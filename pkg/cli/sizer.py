#!/usr/bin/env python3
"""
电路尺寸优化命令行工具

子命令：
    sample    生成 LHS 训练数据库
    train     训练代理模型包并输出测试指标
    optimize  单次优化
    compare   多模式对比实验（汇总表 + 收敛数据）
    report    由运行记录生成收敛曲线 CSV

退出码：0 成功，1 配置/参数错误，2 运行时错误
"""

import argparse
import logging
import math
import os
import sys
import traceback

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigError
from core.harness import (
    convergence_by_mode, format_reductions, load_config, load_traces, optimize_once,
    resolve_experiment_problem, run_experiment, sample_database, train_models,
)
from core.optimizer import MODES

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="实验配置文件 (JSON)")
    common.add_argument("--seed", type=int, help="覆盖配置中的 master_seed")
    common.add_argument("--workers", type=int, help="并发线程数（覆盖 SIZER_WORKERS）")
    common.add_argument("--out", help="输出目录（覆盖 SIZER_OUTPUT_DIR）")
    common.add_argument("-v", "--verbose", action="store_true", help="输出每代的调试日志")

    parser = argparse.ArgumentParser(
        description="代理模型辅助的模拟电路尺寸优化 (SGA / MGA / MGA_MLSP / MGA_MLSCP)",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例用法:
  python cli/sizer.py sample --config configs/tsmcoa.json
  python cli/sizer.py train --config configs/tsmcoa.json --out outputs/tsmcoa
  python cli/sizer.py optimize --config configs/synthetic.json --mode MGA
  python cli/sizer.py compare --config configs/tsmcoa.json --seed 7 --workers 4
  python cli/sizer.py report --out outputs/tsmcoa
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="{sample,train,optimize,compare,report}")
    sub.required = True
    sub.add_parser("sample", parents=[common], help="生成 LHS 训练数据库")
    sub.add_parser("train", parents=[common], help="训练代理模型包")
    opt = sub.add_parser("optimize", parents=[common], help="单次优化")
    opt.add_argument("--mode", choices=MODES, help="优化模式（默认取配置中的第一个）")
    sub.add_parser("compare", parents=[common], help="多模式对比实验")
    rep = sub.add_parser("report", parents=[common], help="由运行记录生成收敛曲线 CSV")
    rep.add_argument("--traces", help="运行记录目录（默认 <out>/traces）")
    return parser


def _load(args):
    if not args.config:
        raise ConfigError("该子命令需要 --config", "config")
    return load_config(args.config, seed=args.seed, workers=args.workers, out=args.out)


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return "-"
    return f"{value:.6g}"


def cmd_sample(args) -> int:
    cfg = _load(args)
    dataset, calls = sample_database(cfg)
    print(f"✅ 数据库已生成: {dataset.n} 行, 失败 {int(dataset.failed.sum())} 行, 评估调用 {calls} 次")
    print(f"📁 {os.path.join(cfg.output_dir, 'dataset.csv')}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    report = train_models(cfg)
    print(f"\n{'模型':<28}{'对象':<24}{'准确率/R²':>12}{'MAE':>14}{'耗时(s)':>10}")
    for row in report.metrics:
        score = row.get("accuracy") if row["role"] == "classifier" else row.get("r2")
        print(f"{row['model']:<28}{row['key']:<24}{_fmt(score):>12}{_fmt(row.get('mae')):>14}"
              f"{row['training_time']:>10.2f}")
    print(f"\n✅ 模型包已保存: {report.bundle_path} (数据库评估 {report.database_calls} 次)")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load(args)
    trace = optimize_once(cfg, args.mode)
    status = "可行" if trace.feasible else "不可行（预算耗尽的惩罚解）"
    print(f"\n✅ [{trace.mode.value}] 最优适应度 {_fmt(trace.best_fitness)} ({status})")
    print(f"   评估调用 {trace.total_calls} 次")
    if trace.best is not None:
        names = resolve_experiment_problem(cfg).variable_names
        for name, value in zip(names, trace.best.vector.values):
            print(f"   {name:<10} = {value:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    table = run_experiment(cfg)
    print(f"\n{'模式':<12}{'Best':>12}{'Worst':>12}{'Mean':>12}{'S.D.':>12}"
          f"{'Mean调用':>12}{'Median调用':>12}{'不可行':>8}")
    for row in table.rows.values():
        print(f"{row.mode:<12}{_fmt(row.best):>12}{_fmt(row.worst):>12}{_fmt(row.mean):>12}"
              f"{_fmt(row.sd):>12}{row.mean_calls:>12.1f}{row.median_calls:>12.1f}{row.infeasible_runs:>8}")
    print(f"\n数据库评估调用: {table.database_calls}")
    for line in format_reductions(table):
        print(f"📉 {line}")
    print(f"\n📁 结果目录: {cfg.output_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = args.out
    if out is None and args.config:
        out = _load(args).output_dir
    traces_dir = args.traces or (os.path.join(out, "traces") if out else None)
    if not traces_dir:
        raise ConfigError("需要 --traces 或 --out", "traces")
    frame = convergence_by_mode(load_traces(traces_dir))
    target_dir = out or os.path.dirname(os.path.abspath(traces_dir))
    os.makedirs(target_dir, exist_ok=True)
    path = os.path.join(target_dir, "convergence.csv")
    frame.to_csv(path, index=False)
    print(f"✅ 收敛数据已写入: {path} ({len(frame)} 个网格点)")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "train": cmd_train,
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "report": cmd_report,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help 返回 0，参数错误按配置错误处理
        return EXIT_OK if not exc.code else EXIT_CONFIG

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"❌ 配置错误: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logger.error(traceback.format_exc())
        print(f"❌ 运行失败: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(cli_main())
