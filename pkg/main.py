import sys

from mlcs_sar.cli import main


if __name__ == "__main__":
    sys.exit(main())
