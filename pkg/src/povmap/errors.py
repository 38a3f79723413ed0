class InputError(ValueError):
    """Malformed or inconsistent user input.

    ``line`` is the 1-based line (or row) number when the error has a
    location in a text stream.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
