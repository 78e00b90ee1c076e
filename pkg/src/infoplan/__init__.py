"""Search-and-recover agents that plan what to do and what to tell a teammate."""

__version__ = "0.1.0"
