"""Level-set lower deviations for branching random walks: rate constants,
simulation engines and strategy lower bounds."""
from .deviation import DeviationResult, ModelSpec, Regime, rate
from .distributions import (Gaussian, NegGumbelTail, NegParetoTail, NegWeibullTail, OffspringLaw,
                            Rademacher, DiscreteStep)
from .rate_fn import RateFunction, x_star

__all__ = ["DeviationResult", "ModelSpec", "Regime", "rate", "Gaussian", "NegGumbelTail", "NegParetoTail",
           "NegWeibullTail", "OffspringLaw", "Rademacher", "DiscreteStep", "RateFunction", "x_star"]
__version__ = "0.1.0"
