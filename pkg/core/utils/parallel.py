from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Mapping

import numpy as np

from core.utils.logger import debug

# 小于该点数时不分块
MIN_CHUNK = 4096


def _threads():
    # 延迟导入，避免 config_manager 与本模块循环依赖
    from core.config_manager import get_config
    return get_config().effective_threads()


def chunked_map(fn: Callable[[dict], object], env: Mapping[str, np.ndarray], size: int, threads: int = None):
    """
    把采样点数组切块，在线程池中并行执行 fn，再按顺序拼接结果。
    fn 接收一个切块后的变量字典，返回 ndarray 或 {key: ndarray}。
    :param fn: 逐块计算函数
    :param env: 变量名 -> 一维采样数组
    :param size: 采样点总数
    :param threads: 线程数，默认取配置
    :return: 与 fn 返回结构一致的拼接结果
    """
    threads = threads or _threads()
    if threads <= 1 or size < 2 * MIN_CHUNK:
        return fn(dict(env))
    n_chunks = min(threads, max(1, size // MIN_CHUNK))
    bounds = np.linspace(0, size, n_chunks + 1).astype(int)
    chunks = [{k: v[lo:hi] for k, v in env.items()} for lo, hi in zip(bounds[:-1], bounds[1:])]
    debug(f"并行计算: {size} 点, {n_chunks} 块, {threads} 线程")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    if isinstance(parts[0], dict):
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    return np.concatenate(parts)


def parallel_map(fn: Callable, items, threads: int = None):
    """
    对任务列表做线程池映射（Lefschetz 稳定化搜索使用）
    """
    items = list(items)
    threads = threads or _threads()
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
