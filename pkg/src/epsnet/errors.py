"""Exception types shared across modules."""


class CapExceededError(RuntimeError):
    """A configured size or iteration cap would be exceeded.

    Attributes
    ----------
    required : the quantity the run would need (count or iterations)
    cap : the configured limit
    """

    def __init__(self, message: str, required=None, cap=None):
        super().__init__(message)
        self.required = required
        self.cap = cap
