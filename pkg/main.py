import sys

from app.cli import cli_dispatch
from app.core.logging import setup_logging, get_logger

setup_logging()
logger = get_logger(__name__)


def main() -> int:
    return cli_dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
