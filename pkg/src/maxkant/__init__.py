"""Max-product Kantorovich sampling operators in Orlicz spaces.

Modules:

* ``kernels``    -- generalized kernels, norms, moments and decay checks
* ``orlicz``     -- phi-functions, domains and the modular functional
* ``operators``  -- the max-product operators and residual modulars
* ``smoothness`` -- modulus of smoothness, Lipschitz fits, K-functional
* ``harness``    -- experiment configs, bound ledgers and reports
"""

from importlib import resources

from .kernels import Kernel, get_kernel
from .operators import MaxProductOperator
from .orlicz import Domain, PhiFunction, get_phi, modular
from .signals import Signal, get_signal

__all__ = ["Domain", "Kernel", "MaxProductOperator", "PhiFunction", "Signal", "get_kernel",
           "get_phi", "get_signal", "modular", "shipped_configs"]
__version__ = "0.1.0"


def shipped_configs() -> list:
    """Paths of the experiment configs bundled with the package."""
    root = resources.files(__package__) / "configs"
    return sorted(p for p in root.iterdir() if p.name.endswith(".toml"))
