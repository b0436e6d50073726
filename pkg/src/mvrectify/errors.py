"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, I/O problems with 3, and contract violations (anything rooted at
ContractError) with 4.
"""


class ContractError(ValueError):
    """A documented precondition or invariant was violated."""


class DimensionError(ContractError):
    """Operand shapes are incompatible. The message names both shapes."""


class LayoutError(ContractError):
    """A token buffer disagrees with its declared (views, rows, cols) layout."""


class SelectionError(ContractError):
    """Top-k selection was asked for more tokens than exist."""

    def __init__(self, n_refs: int, tokens_per_ref: int, requested: int):
        self.n_refs = n_refs
        self.tokens_per_ref = tokens_per_ref
        self.requested = requested
        super().__init__(
            f"cannot select {requested} tokens from {n_refs} reference(s) "
            f"x {tokens_per_ref} tokens; supply more references or duplicate them"
        )


class ProbeError(ContractError):
    """A finite-difference probe produced a non-finite value."""

    def __init__(self, coord: int, detail: str = ""):
        self.coord = coord
        msg = f"non-finite value while probing coordinate {coord}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DivergenceError(ContractError):
    """Carving produced a non-finite loss."""

    def __init__(self, round_index: int):
        self.round_index = round_index
        super().__init__(f"non-finite carving loss in round {round_index}")


class ProjectionError(ContractError):
    """Color projection found no visible vertex in any view."""


class ConfigurationError(Exception):
    """Bad or missing configuration, unknown preset, missing checkpoint."""
