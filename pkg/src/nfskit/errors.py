"""Exception hierarchy shared by every nfskit module."""


class NfsKitError(Exception):
    """Base class; the CLI maps subclasses to a one-line error report."""


class InvalidArgumentError(NfsKitError, ValueError):
    pass


class ParseError(NfsKitError):
    def __init__(self, message: str, path=None, offset: int | None = None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ConsistencyError(NfsKitError):
    pass


class NoOverlapError(NfsKitError):
    """Raised when two clouds share no matched point pairs, leaving NFS undefined."""


class DegenerateFitError(NfsKitError):
    pass
