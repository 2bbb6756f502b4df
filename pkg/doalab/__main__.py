"""Allow ``python -m doalab``."""

from doalab.cli import main

main()
