"""Toy-scale laboratory for quantum query experiments.

Modules: qsim (state vectors and density matrices), oracles, compressed,
advice_oracle, ow2h, poq, transforms, oracle_world, sim_reduction, cli.
"""

__version__ = "0.1.0"
