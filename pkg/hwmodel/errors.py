from typing import Iterable, Optional


class ConfigError(ValueError):
    """A config document or value is malformed or out of range. `field` names the offending key when known."""
    def __init__(self, reason: str, field: Optional[str] = None):
        self.reason = reason
        self.field = field
        super().__init__(f'{field}: {reason}' if field else reason)


class UnknownPresetError(ConfigError, KeyError):
    def __init__(self, name: str, known: Iterable[str]):
        self.name = name
        super().__init__(f'unknown preset {name!r}, expected one of {sorted(known)}', 'preset')

    def __str__(self):
        # KeyError would quote the message.
        return ValueError.__str__(self)
