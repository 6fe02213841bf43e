"""
Runner configuration.
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


class RunnerConfig:
    def __init__(self) -> None:
        self.OUTPUT_DIR = os.getenv("QBOHM_OUTPUT_DIR", "results")
        self.MANIFEST_NAME = os.getenv("QBOHM_MANIFEST_NAME", "manifest.json")


config = RunnerConfig()
