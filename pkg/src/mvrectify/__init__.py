"""mvrectify: multi-reference human reconstruction at desk scale.

Turns small sets of unconstrained reference renders into clean orthogonal
views and a carved, colored mesh, with an evaluation suite to close the
loop. Everything is seeded and CPU-only.
"""

__version__ = "0.1.0"
