"""Distributionally robust network expansion planning under
decision-dependent demand ambiguity: exact reformulations, decomposition
algorithms, instance tooling and out-of-sample evaluation."""

__version__ = "0.1.0"
