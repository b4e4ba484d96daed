import os
import tempfile

# 日志与配置写到临时目录，必须在导入 core 之前设置
os.environ.setdefault("FOLDCALC_HOME", tempfile.mkdtemp(prefix="foldcalc-test-"))
