"""Entry point for running as a module: python -m flexclear."""

from flexclear.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
