"""Exception types and the global enumeration budget."""

from contextlib import contextmanager

DEFAULT_BUDGET_BITS = 26.0

_budget_bits = DEFAULT_BUDGET_BITS


class BudgetExceededError(RuntimeError):
    """Raised when an exact enumeration would exceed the state-space budget."""


class ZeroProbabilityError(ValueError):
    """Raised when conditioning on an event of probability zero."""


class PreconditionError(ValueError):
    """Raised when an input violates a documented precondition."""


class NotStabilizerMixingError(ValueError):
    """Raised when a channel does not map eigenspace projectors to mixtures of them."""


def get_budget_bits():
    return _budget_bits


def set_budget_bits(bits):
    global _budget_bits
    if bits <= 0:
        raise ValueError("budget must be positive")
    _budget_bits = float(bits)


@contextmanager
def budget(bits):
    """Temporarily change the maximal log2 size of enumerated state spaces."""
    old = _budget_bits
    set_budget_bits(bits)
    try:
        yield
    finally:
        set_budget_bits(old)


def check_budget(log2_size, what="state space"):
    if log2_size > _budget_bits + 1e-9:
        raise BudgetExceededError(
            f"{what} has 2^{log2_size:.2f} entries, budget is 2^{_budget_bits:g}"
        )
