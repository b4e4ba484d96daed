import os

store_name = '.foldcalc'


def get_user_path():
    """
    获取用户存储根目录，FOLDCALC_HOME 优先（测试时用于隔离）
    :return:
    """
    override = os.environ.get('FOLDCALC_HOME')
    if override:
        return override
    return os.path.expanduser("~")


def get_user_store_path(*args):
    """
    获取存储位置，不存在时自动创建目录
    :param args: 相对路径片段
    :return: 绝对路径
    """
    root = get_user_path()
    base = root if os.environ.get('FOLDCALC_HOME') else os.path.join(root, store_name)
    full_path = os.path.join(base, *args)
    last_part = os.path.basename(full_path)
    # 最后一段带扩展名时视为文件，只创建父目录
    if '.' in last_part and not last_part.startswith('.'):
        os.makedirs(os.path.dirname(full_path), exist_ok=True)
    else:
        os.makedirs(full_path, exist_ok=True)
    return full_path


def with_suffix(path, suffix):
    """
    在报告路径后追加后缀，例如 report.json -> report.json.txt
    """
    return f"{path}{suffix}"
