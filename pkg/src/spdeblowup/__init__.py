"""Numerical laboratory for finite-time blow-up of a two-component semilinear
system driven by a mix of Brownian and fractional Brownian noise.

Modules
-------
noise     Brownian and fractional Brownian paths, independent or coupled.
params    System parameters and every derived constant and threshold.
stopping  Exponential functionals along paths and their first crossings.
pde       Direct solver for the transformed random PDE system.
prob      Analytic probability bounds and their Monte Carlo oracles.
mc        Seeded, parallel Monte Carlo campaigns.
cli       Command-line front end (``spdeblowup bounds|simulate|validate``).
"""

__version__ = "0.1.0"
