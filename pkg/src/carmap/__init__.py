"""Bayesian disease mapping with localised spatial smoothing and within-area exposure variation."""

__version__ = "0.1.0"

from . import graph, numerics, model, car, localcluster, glm, mcmc, comparators, simstudy, io
