"""Exception taxonomy shared across the package.

Input problems map to CLI exit code 2, broken mathematical contracts
(oracle mismatch, compatibility failure) to exit code 1.
"""


class LindstedtError(Exception):
    """Base class for package errors."""


class InputError(LindstedtError):
    """Malformed or inconsistent user input (bad spec, bad dimensions)."""


class BudgetError(InputError):
    """A requested computation exceeds the documented search/enumeration budget."""


class ContractError(LindstedtError):
    """A mathematical contract that should hold failed (implementation or precision bug)."""
