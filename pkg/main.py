import os
import sys

from gle_homog import cli
from gle_homog.utils import errors, logger, metadata

LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")

if __name__ == "__main__":
    try:
        LOG = logger.setup(level=LOG_LEVEL)
    except errors.ConfigParseError as e:
        sys.exit(cli.handle_error(e))
    LOG.info(f"Starting {metadata.banner()}: log_level={LOG_LEVEL}, threads={os.environ.get(cli.THREADS_ENV, 1)}")
    sys.exit(cli.main())
