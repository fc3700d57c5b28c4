"""L^p primal-dual weak Galerkin solver for linear transport in divergence form."""
__version__ = "0.1.0"
