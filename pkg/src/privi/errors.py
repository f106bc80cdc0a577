"""Shared exception types.

Exit-code mapping for the CLI: ContractViolation -> 2, ProviderError -> 3.
"""


class ContractViolation(ValueError):
    """An operation was called with inputs that break its documented contract."""


class NumericFault(RuntimeError):
    """NaN/Inf surfaced in tensor data or gradients."""


class ProviderError(RuntimeError):
    """An external inference provider failed (timeout, bad status, ...).

    Snippets whose provider call failed are left pending so the stage can be
    resumed; this error never silently drops work.
    """


class SchemaError(ProviderError):
    """A provider response violated the wire schema. Hard error, not retryable."""
