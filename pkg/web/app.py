"""
电路尺寸优化任务服务
Flask 后端 API（仅 JSON，无页面）
"""

import os
import sys
import uuid
import time
import shutil
import threading
import json
import logging
import math
import traceback
from datetime import datetime

from flask import Flask, current_app, request, jsonify, send_file

# 配置日志
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger(__name__)

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.circuit import DesignVector, check_constraints, objective_value
from core.errors import ConfigError, DomainError
from core.evaluator import make_evaluator
from core.harness import config_from_dict, run_experiment
from core.problems import builtin_problems, get_problem, problem_to_dict, synthetic_problem

# ============================================
# 配置
# ============================================

# 数据存储目录（可通过环境变量覆盖）
DEFAULT_DATA_FOLDER = os.environ.get('SIZER_DATA_FOLDER', os.path.join(os.path.dirname(__file__), 'data'))

# 任务目录保留时间
DEFAULT_RETENTION_DAYS = int(os.environ.get('SIZER_RETENTION_DAYS', 30))

# 清理间隔（秒）
CLEANUP_INTERVAL = 6 * 3600

MAX_CONTENT_LENGTH = 1 * 1024 * 1024

_meta_lock = threading.Lock()


# ============================================
# 辅助函数
# ============================================

def generate_task_id():
    """生成任务ID（基于时间戳+UUID）"""
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    short_uuid = str(uuid.uuid4())[:8]
    return f"{timestamp}_{short_uuid}"


def valid_task_id(task_id):
    return bool(task_id) and task_id.replace('-', '').replace('_', '').isalnum()


def experiments_folder(data_folder):
    return os.path.join(data_folder, 'experiments')


def meta_path(data_folder, task_id):
    return os.path.join(data_folder, f"{task_id}_meta.json")


def save_metadata(data_folder, task_id, metadata):
    """保存任务元数据"""
    with _meta_lock:
        with open(meta_path(data_folder, task_id), 'w', encoding='utf-8') as f:
            json.dump(metadata, f, ensure_ascii=False, indent=2)


def load_metadata(data_folder, task_id):
    path = meta_path(data_folder, task_id)
    if not os.path.exists(path):
        return None
    with _meta_lock:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)


def update_metadata(data_folder, task_id, **changes):
    metadata = load_metadata(data_folder, task_id) or {'task_id': task_id}
    metadata.update(changes)
    save_metadata(data_folder, task_id, metadata)
    return metadata


def cleanup_old_files(data_folder, retention_days):
    """清理过期的任务目录和元数据"""
    now = time.time()
    max_age = retention_days * 24 * 3600
    cleaned_count = 0

    folder = experiments_folder(data_folder)
    if os.path.exists(folder):
        for item in os.listdir(folder):
            item_path = os.path.join(folder, item)
            try:
                if now - os.path.getmtime(item_path) > max_age:
                    if os.path.isdir(item_path):
                        shutil.rmtree(item_path)
                    else:
                        os.remove(item_path)
                    cleaned_count += 1
            except OSError as e:
                logger.warning(f"[清理] 删除失败: {item_path}, 错误: {e}")

    for item in os.listdir(data_folder):
        if item.endswith('_meta.json'):
            item_path = os.path.join(data_folder, item)
            try:
                if now - os.path.getmtime(item_path) > max_age:
                    os.remove(item_path)
                    cleaned_count += 1
            except OSError:
                pass

    if cleaned_count > 0:
        logger.info(f"[清理] 已清理 {cleaned_count} 个过期文件/目录")
    return cleaned_count


def start_cleanup_thread(data_folder, retention_days):
    """启动后台清理线程"""
    def cleanup_loop():
        while True:
            time.sleep(CLEANUP_INTERVAL)
            logger.info(f"[清理] 开始清理超过 {retention_days} 天的任务...")
            cleanup_old_files(data_folder, retention_days)

    thread = threading.Thread(target=cleanup_loop, daemon=True)
    thread.start()
    logger.info(f"[清理] 后台清理线程已启动，保留期限: {retention_days} 天")
    return thread


def folder_stats(folder):
    if not os.path.exists(folder):
        return {'count': 0, 'size': 0}
    count = 0
    size = 0
    for item in os.listdir(folder):
        item_path = os.path.join(folder, item)
        count += 1
        if os.path.isfile(item_path):
            size += os.path.getsize(item_path)
        else:
            for root, _, files in os.walk(item_path):
                for f in files:
                    size += os.path.getsize(os.path.join(root, f))
    return {'count': count, 'size': size}


def execute_experiment(data_folder, task_id, cfg):
    """运行实验并把状态写回元数据"""
    update_metadata(data_folder, task_id, status='running', start_time=datetime.now().isoformat())
    try:
        table = run_experiment(cfg)
        update_metadata(data_folder, task_id, status='done', summary=table.to_dict(),
                        finish_time=datetime.now().isoformat())
        logger.info(f"=== 实验完成: {task_id} ===")
    except Exception as e:  # noqa: BLE001
        logger.error(f"实验失败: {task_id}: {e}")
        logger.error(traceback.format_exc())
        update_metadata(data_folder, task_id, status='failed', error=str(e),
                        finish_time=datetime.now().isoformat())


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


# ============================================
# 应用工厂
# ============================================

def create_app(data_folder=None, retention_days=None, run_inline=False, start_cleanup=False):
    """
    创建 Flask 应用

    Args:
        data_folder: 任务数据目录，默认取 SIZER_DATA_FOLDER
        retention_days: 任务保留天数，默认取 SIZER_RETENTION_DAYS
        run_inline: 为 True 时实验在请求内同步执行（测试用）
        start_cleanup: 启动时清理过期任务并开启后台清理线程
    """
    app = Flask(__name__)
    app.config['MAX_CONTENT_LENGTH'] = MAX_CONTENT_LENGTH
    app.config['DATA_FOLDER'] = data_folder or DEFAULT_DATA_FOLDER
    app.config['RETENTION_DAYS'] = retention_days if retention_days is not None else DEFAULT_RETENTION_DAYS
    app.config['RUN_INLINE'] = run_inline

    for folder in [app.config['DATA_FOLDER'], experiments_folder(app.config['DATA_FOLDER'])]:
        os.makedirs(folder, exist_ok=True)

    if start_cleanup:
        cleanup_old_files(app.config['DATA_FOLDER'], app.config['RETENTION_DAYS'])
        start_cleanup_thread(app.config['DATA_FOLDER'], app.config['RETENTION_DAYS'])

    register_routes(app)
    return app


def register_routes(app):

    @app.route('/api/problems')
    def problems():
        """内置问题列表"""
        items = [problem_to_dict(p) for p in builtin_problems() + [synthetic_problem()]]
        return jsonify({'problems': items})

    @app.route('/api/evaluate', methods=['POST'])
    def evaluate():
        """用解析模型评估一个设计点"""
        data = request.get_json(silent=True) or {}
        name = (data.get('problem') or '').strip()
        values = data.get('values')
        if not name or values is None:
            return jsonify({'error': '请提供 problem 和 values 参数'}), 400

        try:
            problem = get_problem(name)
            evaluator = make_evaluator(problem, 'analytic')
            if isinstance(values, dict):
                missing = [v for v in problem.variable_names if v not in values]
                if missing:
                    return jsonify({'error': f'缺少变量: {", ".join(missing)}'}), 400
                values = [values[v] for v in problem.variable_names]
            if len(values) != problem.dim:
                return jsonify({'error': f'需要 {problem.dim} 个变量值，收到 {len(values)} 个'}), 400
            x = DesignVector([float(v) for v in values])
        except ConfigError as e:
            return jsonify({'error': str(e), 'field': e.field}), 400
        except (TypeError, ValueError) as e:
            return jsonify({'error': f'参数格式不正确: {e}'}), 400

        result = evaluator.evaluate(x)
        report = check_constraints(result, problem, x)
        fitness = None
        if not result.is_failure:
            try:
                fitness = objective_value(problem, x, result)
            except DomainError:
                fitness = None

        return jsonify({
            'success': True,
            'problem': problem.name,
            'in_bounds': problem.bounds.contains(x.values),
            'metrics': result.metrics,
            'saturation': result.saturation,
            'failure': result.failure,
            'message': result.message,
            'fitness': fitness,
            'feasibility': {
                'overall': report.overall,
                'violation': report.violation,
                'saturation_passed': report.saturation_passed,
                'constraints': [{
                    'key': o.constraint.key,
                    'comparator': o.constraint.comparator,
                    'threshold': o.constraint.threshold,
                    'value': _json_safe(o.value),
                    'passed': o.passed,
                    'violation': o.violation,
                } for o in report.constraints],
            },
        })

    @app.route('/api/experiments', methods=['POST'])
    def create_experiment():
        """提交对比实验任务"""
        data = request.get_json(silent=True) or {}
        config = data.get('config')
        if not isinstance(config, dict):
            return jsonify({'error': '请提供 config 对象'}), 400

        data_folder = current_app.config['DATA_FOLDER']
        task_id = generate_task_id()
        task_dir = os.path.join(experiments_folder(data_folder), task_id)
        try:
            cfg = config_from_dict(config, out=task_dir)
        except ConfigError as e:
            return jsonify({'error': str(e), 'field': e.field}), 400
        except (TypeError, ValueError) as e:
            return jsonify({'error': f'配置错误: {e}'}), 400

        os.makedirs(task_dir, exist_ok=True)
        save_metadata(data_folder, task_id, {
            'task_id': task_id,
            'status': 'queued',
            'config': cfg.to_dict(),
            'output_dir': task_dir,
            'create_time': datetime.now().isoformat(),
        })
        logger.info(f"=== 实验任务已提交: {task_id} ({cfg.problem}) ===")

        if current_app.config['RUN_INLINE']:
            execute_experiment(data_folder, task_id, cfg)
        else:
            threading.Thread(target=execute_experiment, args=(data_folder, task_id, cfg),
                             daemon=True).start()

        return jsonify({
            'success': True,
            'task_id': task_id,
            'status_url': f'/api/experiments/{task_id}',
        }), 202

    @app.route('/api/experiments/<task_id>')
    def experiment_status(task_id):
        """任务状态与汇总"""
        if not valid_task_id(task_id):
            return jsonify({'error': '无效的任务ID'}), 400
        metadata = load_metadata(current_app.config['DATA_FOLDER'], task_id)
        if metadata is None:
            return jsonify({'error': '任务不存在或已过期'}), 404
        return jsonify(metadata)

    @app.route('/api/experiments/<task_id>/summary.csv')
    def experiment_summary(task_id):
        """下载汇总表"""
        if not valid_task_id(task_id):
            return jsonify({'error': '无效的任务ID'}), 400
        path = os.path.join(experiments_folder(current_app.config['DATA_FOLDER']), task_id, 'summary.csv')
        if not os.path.exists(path):
            return jsonify({'error': '汇总表不存在'}), 404
        return send_file(os.path.abspath(path), mimetype='text/csv', as_attachment=True,
                         download_name=f"{task_id}_summary.csv")

    @app.route('/api/stats')
    def stats():
        """获取存储统计信息（管理用）"""
        return jsonify({
            'retention_days': current_app.config['RETENTION_DAYS'],
            'experiments': folder_stats(experiments_folder(current_app.config['DATA_FOLDER'])),
        })


# gunicorn 入口: web.app:app
app = create_app(start_cleanup=True)


# ============================================
# 启动
# ============================================

if __name__ == '__main__':
    import argparse
    parser = argparse.ArgumentParser()
    parser.add_argument('-p', '--port', type=int, default=8080, help='服务端口')
    parser.add_argument('--data-dir', type=str, help='数据存储目录')
    args = parser.parse_args()

    if args.data_dir:
        app = create_app(args.data_dir, start_cleanup=True)

    data_folder = app.config['DATA_FOLDER']
    retention = app.config['RETENTION_DAYS']

    print(f"\n🚀 服务已启动: http://localhost:{args.port}")
    print(f"📁 数据目录: {data_folder}")
    print(f"📅 任务保留: {retention} 天\n")
    app.run(host='0.0.0.0', port=args.port, debug=False)
