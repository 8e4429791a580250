"""Error type shared across the package.

Every user-facing failure carries a stable ``EFOLD-Exxx`` code so scripts
can match on stderr output.
"""


class EfoldError(Exception):
    """Raised for any anticipated failure (bad input, bad config, bad state)."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"EFOLD-{code}: {message}")


# Code registry (keep stable; append only):
#   E001  file missing / unreadable
#   E002  malformed input (parse errors, bad headers, duplicate cache keys)
#   E003  empty or degenerate dataset
#   E004  dataset vanished under k-core pruning
#   E005  invalid parameter or configuration
#   E006  score cache incomplete for the requested grid
#   E007  external score table invalid (format, bounds, leakage)
#   E008  no evaluable users in a fold
