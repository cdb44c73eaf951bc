from __future__ import annotations

try:
    from rlnc_tdd.cli import main
except ImportError:
    from cli import main


if __name__ == "__main__":
    raise SystemExit(main())
