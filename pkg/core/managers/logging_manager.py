import logging
from logging.handlers import RotatingFileHandler

LOGGER_NAME = "app"


class LoggingManager:
    def __init__(self, app):
        self.app = app

    def setup_logging(self):
        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        logger = logging.getLogger(LOGGER_NAME)

        # Repeated setup (one per CLI invocation in tests) must not stack handlers
        for handler in list(logger.handlers):
            if getattr(handler, "_rasnet_managed", False):
                logger.removeHandler(handler)

        # File log only when a path was given explicitly
        log_file = self.app.config.get("LOG_FILE")
        if log_file:
            file_handler = RotatingFileHandler(log_file, maxBytes=10240, backupCount=10)
            file_handler.setLevel(logging.ERROR)
            file_handler.setFormatter(formatter)
            file_handler._rasnet_managed = True
            logger.addHandler(file_handler)

        if self.app.config.get("DEBUG"):
            stream_handler = logging.StreamHandler()
            stream_handler.setLevel(logging.INFO)
            stream_handler.setFormatter(formatter)
            stream_handler._rasnet_managed = True
            logger.addHandler(stream_handler)

        logger.setLevel(self.app.config.get("LOG_LEVEL", logging.INFO))
        self.app.logger = logger
        return logger
