"""Exception hierarchy shared by every ddmroute module."""


class DDMRouteError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(DDMRouteError, ValueError):
    pass


class InvalidScore(DDMRouteError, ValueError):
    pass


class GenerationFailed(DDMRouteError):
    def __init__(self, producer_id, cause=None):
        self.producer_id = producer_id
        self.cause = cause
        msg = f"generation failed for producer {producer_id!r}"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class ScoringFailed(DDMRouteError):
    def __init__(self, producer_id, cause=None):
        self.producer_id = producer_id
        self.cause = cause
        msg = f"scoring failed for producer {producer_id!r}"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class RecordNotFound(DDMRouteError, KeyError):
    def __init__(self, source_id, producer_id=None):
        self.source_id = source_id
        self.producer_id = producer_id
        if producer_id is None:
            msg = f"no offline record for source_id {source_id!r}"
        else:
            msg = f"record {source_id!r} has no candidate for producer {producer_id!r}"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class UnknownTemplate(DDMRouteError, KeyError):
    def __init__(self, template_id, known=()):
        self.template_id = template_id
        self.known = tuple(known)
        msg = f"unknown template {template_id!r}"
        if self.known:
            msg += "; valid ids: " + ", ".join(self.known)
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class MissingPlaceholder(DDMRouteError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing value for placeholder {name!r}")

    def __str__(self):
        return self.args[0]
