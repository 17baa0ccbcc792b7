import os

import numpy as np
from dotenv import load_dotenv

load_dotenv()

SUPPORTED_PRECISIONS = {"float64": np.float64, "float32": np.float32}


def working_dir() -> str:
    return os.getenv("WORKING_DIR", "")


def get_app_version():
    version_file_path = os.path.join(working_dir(), ".version")
    try:
        with open(version_file_path, "r") as file:
            return file.readline().strip()
    except FileNotFoundError:
        return "unknown"
