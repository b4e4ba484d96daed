import os
from dataclasses import dataclass, asdict, fields

import json5

from core.utils.logger import info, warning, error
from core.utils.path_util import get_user_store_path


@dataclass
class FoldcalcConfig:
    """
    运行配置数据类。
    保存采样网格、容差、随机种子、并行度和领域常数的默认值。
    """
    # 每轴采样点数：dim <= 4 / dim 5-6 / 更高维
    grid_points_low_dim: int = 17
    grid_points_mid_dim: int = 9
    grid_points_high_dim: int = 5

    # 判定阈值
    tolerance: float = 1e-12
    fold_delta: float = 1e-6
    bisection_steps: int = 60
    rank_cutoff: float = 1e-8
    closed_tolerance: float = 1e-9

    # 随机性质检验的种子
    seed: int = 0
    # 0 表示使用 CPU 核数
    threads: int = 0

    # 领口半宽 ε，必须小于 1
    collar_epsilon: float = 0.5

    report_format: str = "json"

    def validate(self) -> tuple[bool, str]:
        """
        验证配置的有效性。
        :return: (bool, str) 是否有效及错误信息
        """
        for name in ("grid_points_low_dim", "grid_points_mid_dim", "grid_points_high_dim"):
            if getattr(self, name) < 2:
                return False, f"{name} 至少为 2"
        if self.tolerance < 0 or self.closed_tolerance < 0:
            return False, "容差不能为负"
        if self.fold_delta <= 0:
            return False, "fold_delta 必须为正"
        if self.bisection_steps < 1:
            return False, "bisection_steps 至少为 1"
        if not 0 < self.rank_cutoff < 1:
            return False, "rank_cutoff 必须在 (0, 1) 内"
        if self.threads < 0:
            return False, "threads 不能为负"
        if not 0 < self.collar_epsilon < 1:
            return False, "collar_epsilon 必须在 (0, 1) 内"
        if self.report_format not in ("json", "text"):
            return False, "report_format 只能是 json 或 text"
        return True, ""

    def grid_points_for(self, dim: int) -> int:
        """
        按维数给出默认每轴点数
        """
        if dim <= 4:
            return self.grid_points_low_dim
        if dim <= 6:
            return self.grid_points_mid_dim
        return self.grid_points_high_dim

    def effective_threads(self) -> int:
        """
        实际线程数：FOLDCALC_THREADS 环境变量为上限
        """
        threads = self.threads or (os.cpu_count() or 1)
        cap = os.environ.get("FOLDCALC_THREADS")
        if cap:
            try:
                threads = min(threads, max(1, int(cap)))
            except ValueError:
                warning(f"FOLDCALC_THREADS 无法解析: {cap}")
        return max(1, threads)


class ConfigManager:
    """
    配置管理器。
    负责加载、保存、更新运行配置，单例实现。
    """

    _instance = None

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if hasattr(self, '_initialized'):
            return
        super().__init__()
        self.config_path = get_user_store_path("config.json")
        self._config = FoldcalcConfig()
        self._initialized = True
        self._load_config()

    @property
    def config(self) -> FoldcalcConfig:
        return self._config

    def _load_config(self):
        """
        从文件加载配置，文件不存在时写入默认配置。
        未知字段忽略，非法配置回退为默认值。
        """
        if os.path.exists(self.config_path):
            try:
                with open(self.config_path, "r", encoding="utf-8") as f:
                    config_data = json5.load(f)
                known = {f.name for f in fields(FoldcalcConfig)}
                loaded = FoldcalcConfig(**{k: v for k, v in config_data.items() if k in known})
                ok, msg = loaded.validate()
                if ok:
                    self._config = loaded
                    info(f"加载配置文件成功: {self.config_path}")
                else:
                    warning(f"配置文件无效，使用默认配置: {msg}")
                    self._config = FoldcalcConfig()
            except Exception as e:
                error(f"加载配置文件失败: {e}")
                self._config = FoldcalcConfig()
        else:
            self.do_save_config()
            info("未找到配置文件，已创建默认配置")

    def do_save_config(self):
        """
        真正执行写入磁盘操作。
        """
        try:
            with open(self.config_path, "w", encoding="utf-8") as f:
                json5.dump(asdict(self._config), f, ensure_ascii=False, indent=2,
                           quote_keys=True, trailing_commas=False)
            info(f"保存配置文件成功: {self.config_path}")
        except Exception as e:
            error(f"保存配置文件失败: {e}")

    def update_config(self, new_config: FoldcalcConfig, persist: bool = True) -> tuple[bool, str]:
        """
        更新配置。
        :param new_config: 新配置
        :param persist: 是否写回磁盘（命令行临时覆盖时为 False）
        :return: (bool, str) 是否成功及消息
        """
        is_valid, error_msg = new_config.validate()
        if not is_valid:
            warning(f"配置验证失败: {error_msg}")
            return False, error_msg
        self._config = new_config
        if persist:
            self.do_save_config()
        return True, "配置更新成功"


def get_config() -> FoldcalcConfig:
    """
    获取当前配置对象的便捷方法
    """
    return ConfigManager().config
