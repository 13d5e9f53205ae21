"""Verification laboratory for entanglement-assisted invariance.

The package takes the constructive route to the amplitude-squared probability
rule and makes every step executable: Schmidt machinery (`hilbert`), the
invariance-under-countered-transformations test (`envariance`), fine-graining
and equal-amplitude counting (`born`), decoherence-selected record bases
(`pointer`), the Boolean algebra of recorded outcomes (`records`), exact
repeated-experiment statistics (`frequencies`), and the wave-function
discretization bridge (`continuum`), all driven by a deterministic batch CLI
(`cli`).
"""

__version__ = "0.1.0"
