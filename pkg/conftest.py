# conftest.py

import os
import sys

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

# keep test runs out of the dated log files and quiet on the console
os.environ.setdefault("LQSPARSE_LOG_DIR", "")
os.environ.setdefault("LQSPARSE_LOG_LEVEL", "WARNING")
