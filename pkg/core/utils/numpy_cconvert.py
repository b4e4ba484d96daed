from fractions import Fraction

import numpy as np


def convert_numpy_types(obj):
    """
    将报告、清单中的 NumPy 类型和分数转换为可直接写入 JSON 的原生类型
    :param obj: 任意嵌套的 dict / list / tuple / 标量
    :return: 原生 Python 对象
    """
    if isinstance(obj, np.ndarray):
        return [convert_numpy_types(v) for v in obj.tolist()]
    elif isinstance(obj, (np.bool_, np.integer, np.floating)):
        return convert_numpy_types(obj.item())
    elif isinstance(obj, Fraction):
        # 分数以字符串保存，保证精确
        return str(obj)
    elif isinstance(obj, float):
        # JSON 不支持 inf / nan
        if obj != obj:
            return "nan"
        if obj in (float('inf'), float('-inf')):
            return "inf" if obj > 0 else "-inf"
        return obj
    elif isinstance(obj, dict):
        return {str(k): convert_numpy_types(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(item) for item in obj]
    else:
        return obj


def restore_float(value):
    """
    convert_numpy_types 的逆向：把 "nan"/"inf" 字符串还原为浮点数
    """
    if isinstance(value, str) and value in ("nan", "inf", "-inf"):
        return float(value)
    return value
