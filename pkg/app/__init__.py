from dotenv import load_dotenv

from core.configuration.configuration import get_app_version
from core.managers.config_manager import ConfigManager
from core.managers.error_handler_manager import ErrorHandlerManager
from core.managers.logging_manager import LoggingManager

# Load environment variables
load_dotenv()


class RasnetApp:
    """Process-wide context: resolved configuration, logger and error policy."""

    def __init__(self, name="rasnet"):
        self.name = name
        self.config = {}
        self.logger = None
        self.error_handler = None

    @property
    def debug(self):
        return bool(self.config.get("DEBUG"))


def create_app(config_name=None):
    app = RasnetApp()

    # Load configuration according to environment
    config_manager = ConfigManager(app)
    config_manager.load_config(config_name=config_name)
    app.config["APP_VERSION"] = get_app_version()

    # Set up logging
    logging_manager = LoggingManager(app)
    logging_manager.setup_logging()

    # Initialize error handler manager
    app.error_handler = ErrorHandlerManager(app)

    return app
