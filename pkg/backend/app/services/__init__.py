from . import covering_sim, exponent_solver, information, model, rate_solver, report

__all__ = ["covering_sim", "exponent_solver", "information", "model", "rate_solver", "report"]
