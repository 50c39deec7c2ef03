"""Ground states of -Delta u = g(u) on R^N by global minimization of
h(Phi) - Psi over radial profiles, followed by a dilation.

Modules: ``expr`` (expression language), ``model`` (nonlinearities and
hypothesis checks), ``grid`` (radial discretization), ``energy``
(functionals and gradients), ``solver`` (pipelines), ``verify``
(oracles and diagnostics), ``cli`` (batch front door).
"""

__version__ = "0.1.0"
