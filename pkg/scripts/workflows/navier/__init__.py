# SPDX-License-Identifier: copyleft-next-0.3.1
"""
Verification workbench for the Navier equations of linear elastodynamics
on annulus and spherical-shell domains.
"""

__version__ = "0.3.0"


class NavierError(Exception):
    """Base class of every error raised by the workbench."""
    pass
