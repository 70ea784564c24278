"""
Environment-driven defaults.

Values are read once at import after loading an optional .env file.
"""

import os

from dotenv import load_dotenv

load_dotenv(override=False)

LOG_LEVEL = os.getenv("LATCOUNT_LOG_LEVEL", "WARNING")
LOG_FILE = os.getenv("LATCOUNT_LOG_FILE") or None
DEFAULT_THREADS = max(1, int(os.getenv("LATCOUNT_THREADS", "1")))
DEFAULT_TAIL_TOL = float(os.getenv("LATCOUNT_TAIL_TOL", "1e-14"))
