"""Random linear network coding over a TDD erasure link, analyzed as an M/G^(m,K)/1 bulk-service queue."""

try:
    from rlnc_tdd.version import __version__
except ImportError:
    from version import __version__

__all__ = ["__version__"]
