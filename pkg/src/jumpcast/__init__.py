"""jumpcast: hourly crypto price forecasting with jump-diffusion Monte Carlo.

Pipeline: ingest monthly kline dumps -> rolling drift/volatility features ->
monthly-retrained drift and volatility forecasters (OLS, degree-2
polynomial, boosted trees with and without gradient-based row sampling,
GJR-GARCH) -> per-hour path-dependent Monte Carlo over every drift x
volatility pair -> hourly and transactional regression/classification
metrics.
"""

__version__ = "0.1.0"
