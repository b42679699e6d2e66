"""Exception hierarchy shared across the gateway."""


class EdgeTalkError(Exception):
    """Base class for all errors raised by this package."""


# --- registry ---------------------------------------------------------------

class MalformedDeviceIdError(EdgeTalkError):
    """Device id is empty or contains characters outside [a-z0-9_-]."""


class DuplicateDeviceError(EdgeTalkError):
    """A device with this id is already registered."""


class TopicMismatchError(EdgeTalkError):
    """Descriptor topics do not match the configured topic scheme."""


# --- transport --------------------------------------------------------------

class TopicParseError(EdgeTalkError):
    """Topic string does not follow the <prefix>/<id>/<direction> scheme."""


class BackpressureError(EdgeTalkError):
    """Offline publish queue is full; the command was rejected."""


class TransportError(EdgeTalkError):
    """MQTT connection or protocol failure."""


# --- prompt -----------------------------------------------------------------

class CommandRejectedError(EdgeTalkError):
    """User command failed the input guard (length, control characters)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class EmptyDeviceListError(EdgeTalkError):
    """Cannot build a prompt without any devices."""


# --- backend ----------------------------------------------------------------

class BackendError(EdgeTalkError):
    """Base class for inference backend failures."""


class BackendTimeoutError(BackendError):
    """The backend did not answer within the configured timeout."""


class BackendConnectionError(BackendError):
    """The backend endpoint could not be reached."""


class BackendHTTPError(BackendError):
    """The backend answered with an HTTP error status."""

    def __init__(self, status_code: int, detail: str = ""):
        super().__init__(f"backend returned HTTP {status_code}: {detail}")
        self.status_code = status_code


class BackendProtocolError(BackendError):
    """The backend answer is missing the expected response field."""


class UnscriptedInputError(BackendError):
    """The scripted backend has no entry for this user command."""


class ScriptParseError(EdgeTalkError):
    """A script file line failed to parse."""

    def __init__(self, line_number: int, detail: str):
        super().__init__(f"line {line_number}: {detail}")
        self.line_number = line_number


# --- parsing ----------------------------------------------------------------

class ResponseParseError(EdgeTalkError):
    """Base class for model-response parsing failures."""


class ExtractionError(ResponseParseError):
    """No balanced JSON block containing commands was found."""

    def __init__(self, excerpt: str):
        super().__init__(f"no commands block found in model output: {excerpt!r}")
        self.excerpt = excerpt


class UnparseableResponseError(ResponseParseError):
    """Candidate block still fails to parse after the repair pass."""


class ResponseSchemaError(ResponseParseError):
    """Parsed JSON does not match the expected description/commands shape."""


# --- storage ----------------------------------------------------------------

class RecordSchemaError(EdgeTalkError):
    """Event payload does not match the schema for its kind."""


# --- processing -------------------------------------------------------------

class UndecodablePayloadError(EdgeTalkError):
    """Raw payload bytes are not valid UTF-8."""


class AggregationTypeError(EdgeTalkError):
    """Numeric aggregation requested over non-numeric readings."""


# --- gateway ----------------------------------------------------------------

class ConfigError(EdgeTalkError):
    """Gateway configuration file is invalid."""


class SessionQueueFullError(EdgeTalkError):
    """Too many commands already queued for this session."""


class TraceNotFoundError(EdgeTalkError):
    """No trace with the requested id."""


# --- bench ------------------------------------------------------------------

class ScenarioError(EdgeTalkError):
    """Scenario file is malformed."""
