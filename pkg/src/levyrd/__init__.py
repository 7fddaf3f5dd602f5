"""Fixed-point solvers and diagnostics for stochastic reaction-diffusion systems with Levy noise."""

__version__ = "0.1.0"
