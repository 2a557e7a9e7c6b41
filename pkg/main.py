# main.py
import sys

from cycle_queue.cli import main

if __name__ == "__main__":
    sys.exit(main())
