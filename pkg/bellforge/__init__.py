# pylint: disable=invalid-name

"""
This module exports only what you need for a basic run. The verifier, self-test
and preparation checks live in their own submodules.
"""

from .forge import Forge
