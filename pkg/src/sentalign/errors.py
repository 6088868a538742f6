"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: InputError -> 1, ConstraintError -> 2,
anything else -> 3.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(ToolkitError):
    """Malformed or inconsistent input data (files, config, arguments)."""


class ConstraintError(ToolkitError):
    """A requested operation cannot satisfy its constraints (e.g. split target)."""
