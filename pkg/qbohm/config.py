"""
Numerical core configuration.
Values come from the environment, optionally seeded from a .env file at the repo root.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

current_file_path = Path(__file__).resolve()
root_dir = current_file_path.parent.parent
env_path = root_dir / ".env"

if env_path.exists():
    load_dotenv(dotenv_path=env_path, override=True)


class QBohmConfig:
    def __init__(self) -> None:
        self.THREADS = max(1, int(os.getenv("QBOHM_THREADS", os.cpu_count() or 1)))
        self.NODE_THRESHOLD = float(os.getenv("QBOHM_NODE_THRESHOLD", "1e-8"))
        self.LOG_LEVEL = os.getenv("QBOHM_LOG_LEVEL", "INFO")
        self.LOG_DIR = os.getenv("QBOHM_LOG_DIR", "logs")


config = QBohmConfig()
