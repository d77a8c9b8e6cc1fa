"""Exception hierarchy for expert backends."""

from __future__ import annotations


class GatewayError(Exception):
    """Base class for every backend failure."""


class TransportError(GatewayError):
    """Network or server-side failure; safe to retry."""


class EmptyResponse(GatewayError):
    """The backend answered but produced no usable content."""


class FixtureMissing(EmptyResponse):
    def __init__(self, kind: str, digest: str):
        super().__init__(f"no recorded {kind} fixture for request digest {digest}")
        self.kind = kind
        self.digest = digest


class BackendRefusal(GatewayError):
    """Structured error returned by the backend; not retried."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class UnknownModelTag(BackendRefusal):
    pass


class ResponseValidationError(GatewayError, ValueError):
    """Returned geometry or raster does not fit the image."""


class MaskEmpty(GatewayError):
    """Segmentation produced an empty mask for one or more boxes.

    ``masks`` holds the successful masks in box order with ``None`` at each
    failed position, so callers can salvage the rest.
    """

    def __init__(self, failed: list[int], masks: list):
        super().__init__(f"empty mask for box index(es) {failed}")
        self.failed = failed
        self.masks = masks
