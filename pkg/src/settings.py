import os

from dotenv import load_dotenv

load_dotenv()


class Settings:
    def __init__(self):
        self.OUTPUT_DIR = os.getenv("LOOPOPT_OUTPUT_DIR", "results")
        self.LOG_LEVEL = os.getenv("LOOPOPT_LOG_LEVEL", "INFO").upper()
