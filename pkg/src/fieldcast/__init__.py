"""fieldcast: functional time series modelling of spatiotemporal forecast errors.

Daily error fields are represented on a tensor-product cubic B-spline basis,
reduced to a small spatial basis by PCA of the fitted coefficients, and the
basis coefficients are modelled with independent AR(1)+GARCH(1,1) processes
with Student-t innovations. One-step-ahead coefficient predictions turn into
bias corrections of the raw forecasts with per-location uncertainty.
"""

from fieldcast._backend import BACKEND, get_backend

__version__ = "0.1.0"

__all__ = ["BACKEND", "get_backend", "__version__"]
