"""Desk-scale numerical certificates for weighted-homogeneous surface germs.

The package measures metric phenomena (densities, conflict sets, coverings,
Lipschitz bounds) on families like x^5 + z^15 + y^7 z + t x y^6 = 0 and
reports seeded, reproducible evidence; nothing here is a proof.
"""

__version__ = "0.1.0"

from . import cli, covering, metric, sampling, separating, surfaces  # noqa: F401
