from . import exponent, oracle, rate, simulate

__all__ = ["exponent", "oracle", "rate", "simulate"]
