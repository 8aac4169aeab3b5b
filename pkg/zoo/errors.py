class ZooError(Exception):
    """Base of every error raised by the network zoo."""
    pass


class UnknownNetworkError(ZooError, KeyError):
    """The name is not in the catalog, or names a reference row that has no builder."""
    def __init__(self, name: str, reason: str = 'unknown network'):
        super().__init__(f'{reason}: {name}')
        self.name = name
        self.reason = reason

    def __str__(self):
        return f'{self.reason}: {self.name}'


class SpecError(ZooError, ValueError):
    """A SqueezeNextSpec whose channel arithmetic or depth distribution is invalid."""
    pass
