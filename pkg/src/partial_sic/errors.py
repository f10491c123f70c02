"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid code, frame, channel or experiment configuration.

    ``violations`` lists every problem found, not only the first one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
