import logging
import os


class ConfigValidationError(ValueError):
    """A configuration value violates the invariants of the module that owns it."""


class ConfigManager:
    def __init__(self, app):
        self.app = app

    def load_config(self, config_name=None):
        # If config_name is not provided, use the environment variable RASNET_ENV
        if config_name is None:
            config_name = os.getenv("RASNET_ENV", "development")

        if config_name == "testing":
            config_class = TestingConfig
        elif config_name == "production":
            config_class = ProductionConfig
        else:
            config_class = DevelopmentConfig

        self.app.config.update({key: getattr(config_class, key) for key in dir(config_class) if key.isupper()})
        self.app.config["ENV"] = config_name
        self.validate()

    def validate(self):
        if self.app.config["PRECISION"] not in ("float64", "float32"):
            raise ConfigValidationError(f"PRECISION must be float64 or float32, got '{self.app.config['PRECISION']}'")


class Config:
    WORKING_DIR = os.getenv("WORKING_DIR", "")
    PRECISION = os.getenv("RASNET_PRECISION", "float64")
    LOG_FILE = os.getenv("RASNET_LOG_FILE")
    LOG_LEVEL = logging.INFO
    DEBUG = False
    TESTING = False


class DevelopmentConfig(Config):
    DEBUG = True


class TestingConfig(Config):
    TESTING = True
    # Finite-difference checks and golden hashes need 64-bit
    PRECISION = "float64"
    LOG_FILE = None


class ProductionConfig(Config):
    DEBUG = False
    LOG_LEVEL = logging.WARNING
