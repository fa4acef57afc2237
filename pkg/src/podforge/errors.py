"""Exception hierarchy shared by all podforge modules."""


class PodforgeError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class PoolEmpty(PodforgeError):
    pass


class InvalidAsset(PodforgeError):
    def __init__(self, asset_id, reason=""):
        self.asset_id = asset_id
        msg = f"invalid asset {asset_id!r}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class IoError(PodforgeError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot access {self.path}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class InvalidArgument(PodforgeError, ValueError):
    pass


class CorruptScene(PodforgeError):
    pass


class InsufficientScenes(PodforgeError):
    pass


class Undefined(PodforgeError):
    """A metric has no defined value, e.g. AP with zero ground truths."""
