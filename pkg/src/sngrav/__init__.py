"""Semi-classical (Schroedinger-Newton) gravity signatures in continuously
measured optomechanics: conditional Gaussian dynamics, quantum trajectories,
output spectra, correlations and ponderomotive squeezing."""

__version__ = "0.1.0"
