"""rtgauntlet: random-transformation defenses and the attacks that break them.

A desk-scale toolkit for building classifiers wrapped in randomized input
transformations, attacking them with variance-aware stochastic PGD variants,
approximating non-differentiable transforms with trained surrogates, tuning
the defense by Bayesian optimization, and evaluating everything with
confidence intervals.
"""

__version__ = "0.1.0"
