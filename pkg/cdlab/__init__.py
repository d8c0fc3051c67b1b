"""
cdlab: Convection-Diffusion Laboratory
======================================

Stabilized finite-element formulations of the periodic convection-diffusion equation on
B-spline spaces, with generalized-alpha time stepping and a complete discrete energy ledger.

Usage:
------
```python
from cdlab import RunConfig, run

# The rotating-block benchmark on a 32x32 mesh with GLS and dynamic small-scales
config = RunConfig.preset("paper-32", formulation="glsd", output_dir="out/glsd-32")
result = run(config)

# Per-step energy quantities
print(result.ledger.column("energy_total"))
print(result.ledger.column("balance_residual"))
```

For more examples, see docs/getting_started.md.
"""

__version__ = "0.1.0"

from cdlab.config import RunConfig
from cdlab.core import RunResult, Simulation, run, sweep
from cdlab.exceptions import ConfigError, SolverError
from cdlab.formulations import Formulation, FormulationKind
