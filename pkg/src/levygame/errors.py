"""Exception types shared across the package."""


class DegenerateDriverError(ValueError):
    """The Levy triplet has neither a Gaussian part nor jumps."""


class RankDeficiencyError(ValueError):
    """A Gram matrix is not positive definite up to the requested order."""

    def __init__(self, order, pivot):
        self.order = order
        self.pivot = pivot
        super().__init__(
            f"Gram matrix is rank deficient at order {order} (pivot {pivot:.3e}); "
            "lower K, e.g. via effective_order"
        )


class ResourceError(MemoryError):
    """A requested simulation exceeds the configured memory budget."""


class DivergenceError(FloatingPointError):
    """A time-stepping scheme left the configured bound."""

    def __init__(self, stage, step, value):
        self.stage = stage
        self.step = step
        super().__init__(f"{stage} diverged at step {step} (max |value| = {value:.3e})")


class ShapeError(ValueError):
    """Array arguments have inconsistent shapes."""


class ConfigError(ValueError):
    """A problem configuration failed validation.

    ``errors`` is a list of ``(json_path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{p}: {m}" for p, m in self.errors)
        super().__init__(msg)
