"""Exception hierarchy shared across the library.

The CLI maps these onto its exit codes: DataError -> 3,
NumericalError -> 4.  Argument problems are plain ValueError
(or argparse's own exit 2).
"""


class GiqaError(Exception):
    """Base class for library errors."""


class DataError(GiqaError):
    """Malformed input data: bad files, dimension mismatches, bad ids."""


class NumericalError(GiqaError):
    """Numerical failure: divergence, repeated degenerate collapse."""


class ExactMatchError(GiqaError):
    """A query coincides exactly with a reference point (distance 0).

    Carries the id of the matching reference row so callers can
    apply their clamp policy.
    """

    def __init__(self, matching_id: str):
        super().__init__(f"query exactly matches reference point {matching_id!r}")
        self.matching_id = matching_id
