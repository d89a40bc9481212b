import logging

_CONFIGURED = False


class LogUtil:
    FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    def __init__(self):
        pass

    @staticmethod
    def setup(level: str = "INFO"):
        """配置根日志，只生效一次；再次调用只调整级别"""
        global _CONFIGURED
        numeric = getattr(logging, str(level).upper(), logging.INFO)
        if not _CONFIGURED:
            logging.basicConfig(level=numeric, format=LogUtil.FORMAT)
            _CONFIGURED = True
        logging.getLogger().setLevel(numeric)
