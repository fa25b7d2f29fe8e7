"""Differentiable co-design of tablet geometry and excipient layout.

Submodules:

* ``geometry``  - supershape phase field and its parameter Jacobian
* ``matfield``  - coordinate network for the excipient fractions
* ``materials`` - pointwise property model (D(phi), h(phi), mixture rule)
* ``fem``       - coupled Allen-Cahn / diffusion transient solver
* ``autodiff``  - implicit-function-theorem adjoint with checkpointing
* ``optimize``  - objective, constraints, log-barrier loss and the Adam loop
* ``cli``       - config ingestion, run orchestration and artifact export
"""

__version__ = "0.1.0"
