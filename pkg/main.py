"""Entry point for the ynet command-line pipeline."""

from SRC.cli.main import main

if __name__ == "__main__":
    raise SystemExit(main())
