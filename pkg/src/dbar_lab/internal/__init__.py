"""
Internal implementation details for the dbar compactness lab.

Nothing in this package is part of the public API. Experiment plugins should
depend on `dbar_lab.api` and `dbar_lab.model` only; the layout of this
package may change between any two releases.
"""

__all__ = []
