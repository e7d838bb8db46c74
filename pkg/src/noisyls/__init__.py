"""Noise-tolerant line search with probabilistic gradients.

Subpackages and modules:

``oracles``     test problems and bounded-noise function oracles
``gradients``   gradient estimators and accuracy conditions
``linesearch``  the adaptive line search loop and direction rules
``theory``      closed-form step thresholds, floors and complexity bounds
``process``     simulator for the abstract step-size/progress process
``harness``     configuration, experiments and the ``noisyls`` CLI
"""

from noisyls.errors import ConfigurationError, DomainError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DomainError", "__version__"]
