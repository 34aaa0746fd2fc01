"""Long-run growth under heritable fertility risk.

This package solves for the equivalent growth rate of a population whose
birth rate has heritable, idiosyncratic and aggregate components, integrates
the continuum share and mass dynamics, compares consumption lotteries under a
power fertility map, and simulates finite populations organised in dynasties.
"""

__version__ = "0.1.0"
