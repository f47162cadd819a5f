"""Two bosonic atoms in moving optical microtraps: a motional-state sqrt(SWAP) gate simulator."""

__version__ = "0.1.0"
