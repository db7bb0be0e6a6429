"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input data, configuration, or model state violates a documented contract."""


class SchemaMismatchError(ValidationError):
    """A persisted artifact was built against a different attribute schema."""
