"""Exception hierarchy shared by all modules."""


class HoropointsError(Exception):
    pass


class NotInvertible(HoropointsError):
    pass


class NotSpecialLinear(HoropointsError):
    pass


class NotPrimitive(HoropointsError):
    pass


class EnumerationTooLarge(HoropointsError):
    pass


class PreconditionViolated(HoropointsError):
    pass


class DimensionTooLarge(HoropointsError):
    pass


class ConfigInvalid(HoropointsError):
    pass


class GoldenMismatch(HoropointsError):
    def __init__(self, fields):
        self.fields = list(fields)
        super().__init__("golden drift in: " + ", ".join(str(f) for f in self.fields))
