"""Exception types shared across the package."""


class RefgameError(Exception):
    """Base class for all refgame errors."""


class UnknownSymbol(RefgameError):
    """A token does not name any symbol in the lexicon."""

    def __init__(self, token: str):
        super().__init__(f"unknown symbol: {token!r}")
        self.token = token


class ObjectNotFound(RefgameError):
    """Requested object id does not occur in the label mask."""


class EmptyImage(RefgameError):
    """Image has zero pixels."""


class DimensionMismatch(RefgameError):
    """Parameter layout disagrees with the lexicon's feature dimensions."""


class UnknownEnvironment(RefgameError):
    """Environment id not present in the store."""

    def __init__(self, env_id: str):
        super().__init__(f"unknown environment: {env_id!r}")
        self.env_id = env_id


class EmptySelection(RefgameError):
    """A selected-object set (or a task filter result) is empty."""


class MassOverflow(RefgameError):
    """Fixed per-object mass for unselected objects exceeds the unit budget."""


class NonFiniteLoss(RefgameError):
    """Loss or gradient became non-finite during optimization."""


class SchemaError(RefgameError):
    """A corpus or model file violates its schema."""


class DanglingEnvRef(SchemaError):
    """A task references an environment id that does not exist."""


class DuplicateId(SchemaError):
    """An id that must be unique occurs more than once."""


class TooFewGroups(RefgameError):
    """Cross-validation requires at least two groups."""


class PlacementFailure(RefgameError):
    """Rejection sampling could not place all blocks for this seed."""


class DegenerateCloud(RefgameError):
    """All horizontal projections coincide; grasp direction is undefined."""


class RasterFormatError(RefgameError):
    """A PPM/PGM stream is malformed or uses an unsupported variant."""
