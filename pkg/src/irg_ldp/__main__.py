from __future__ import annotations

import sys

from irg_ldp.app import dispatch


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
