"""Gaussian covariance-matrix simulation of spin-1 ensembles probed by Faraday rotation."""
from . import algebra, lightmatter, magnetics, measurement, oracle, state

__all__ = ["algebra", "lightmatter", "magnetics", "measurement", "oracle", "state"]
