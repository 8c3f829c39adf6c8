import sys

from adv_tagger.cli import main

if __name__ == "__main__":
    sys.exit(main())
