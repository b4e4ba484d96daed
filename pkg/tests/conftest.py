import numpy as np
import pytest

from core.config_manager import ConfigManager, FoldcalcConfig


@pytest.fixture(autouse=True)
def reset_config():
    """命令行参数会覆盖单例配置，每个用例结束后恢复默认值"""
    yield
    ConfigManager().update_config(FoldcalcConfig(), persist=False)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def sample_env(rng):
    """
    坐标盒内的均匀随机点
    :return: fn(chart, count, inset=0.0) -> {变量名: ndarray}
    """
    def make(chart, count, inset=0.0):
        out = {}
        for v, (lo, hi) in zip(chart.variables, chart.box):
            pad = inset * (hi - lo)
            out[v] = rng.uniform(lo + pad, hi - pad, count)
        return out
    return make


@pytest.fixture
def forms_close():
    """
    两个同次形式在采样点上逐系数比较
    :return: fn(a, b, env, tol) -> 最大偏差
    """
    def compare(a, b, env, tol=1e-9):
        assert a.chart == b.chart and a.degree == b.degree
        size = len(next(iter(env.values())))
        va = a.evaluate(env, strict=False)
        vb = b.evaluate(env, strict=False)
        worst = 0.0
        for key in set(va) | set(vb):
            x = np.broadcast_to(np.asarray(va.get(key, 0.0), dtype=float), (size,))
            y = np.broadcast_to(np.asarray(vb.get(key, 0.0), dtype=float), (size,))
            scale = 1.0 + np.maximum(np.abs(x), np.abs(y))
            worst = max(worst, float(np.max(np.abs(x - y) / scale)))
        assert worst <= tol, f"最大相对偏差 {worst:.3e}"
        return worst
    return compare
