"""Resource-bounded Kucera-Gacs codec, compressed-oracle format and
finite-state frequency analysis."""

__version__ = "0.1.0"
