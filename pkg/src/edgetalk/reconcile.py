"""Delta-only reconciliation: desired states vs. the snapshot, then dispatch.

Planning is a pure function; only entries whose desired action differs from
the current value AND is within the device's capability set become actions.
Unsupported actions are skipped rather than coerced to a nearby capability:
silently changing user intent is worse than doing nothing.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

from .errors import BackpressureError, TransportError
from .parsing import ParsedResponse
from .registry import DeviceRegistry, StateSnapshot

logger = logging.getLogger(__name__)


class Decision(str, Enum):
    ACT = "act"
    SKIP_SAME = "skip_same"
    SKIP_UNSUPPORTED = "skip_unsupported"
    SKIP_UNKNOWN_DEVICE = "skip_unknown_device"


@dataclass(frozen=True)
class PlanEntry:
    device_id: str
    desired: str
    current: str
    decision: Decision
    reason: str

    @classmethod
    def from_dict(cls, doc: dict) -> "PlanEntry":
        return cls(
            device_id=doc["device_id"],
            desired=doc["desired"],
            current=doc["current"],
            decision=Decision(doc["decision"]),
            reason=doc["reason"],
        )


@dataclass
class ReconciliationPlan:
    entries: tuple[PlanEntry, ...]
    created_at: float
    source_inference_seq: int | None = None  # filled once the trace is persisted

    def act_entries(self) -> list[PlanEntry]:
        return [e for e in self.entries if e.decision is Decision.ACT]

    @classmethod
    def from_dict(cls, doc: dict) -> "ReconciliationPlan":
        return cls(
            entries=tuple(PlanEntry.from_dict(e) for e in doc["entries"]),
            created_at=doc["created_at"],
            source_inference_seq=doc.get("source_inference_seq"),
        )


@dataclass(frozen=True)
class DispatchOutcome:
    device_id: str
    action: str
    sent: bool
    error: str | None = None
    dispatched_at: float | None = None  # when the optimistic state was written

    @classmethod
    def from_dict(cls, doc: dict) -> "DispatchOutcome":
        return cls(
            doc["device_id"],
            doc["action"],
            doc["sent"],
            doc.get("error"),
            doc.get("dispatched_at"),
        )


@dataclass(frozen=True)
class DispatchReport:
    outcomes: tuple[DispatchOutcome, ...] = ()

    def sent_count(self) -> int:
        return sum(1 for o in self.outcomes if o.sent)

    @classmethod
    def from_dict(cls, doc: dict) -> "DispatchReport":
        return cls(tuple(DispatchOutcome.from_dict(o) for o in doc.get("outcomes", [])))


def plan(
    parsed: ParsedResponse,
    snapshot: StateSnapshot,
    registry: DeviceRegistry,
) -> ReconciliationPlan:
    """One entry per parsed command, same order; planning never fails."""
    entries: list[PlanEntry] = []
    for command in parsed.commands:
        descriptor = registry.get_device(command.device)
        current = snapshot.value_of(command.device)
        if descriptor is None:
            decision = Decision.SKIP_UNKNOWN_DEVICE
            reason = f"{command.device!r} is not a registered device"
        elif command.action not in descriptor.capabilities:
            decision = Decision.SKIP_UNSUPPORTED
            reason = (
                f"{command.action!r} not in capabilities "
                f"{{{', '.join(sorted(descriptor.capabilities))}}}"
            )
        elif command.action == current:
            decision = Decision.SKIP_SAME
            reason = f"already {current!r}, no action needed"
        else:
            decision = Decision.ACT
            reason = f"current {current!r} differs from desired {command.action!r}"
        entries.append(
            PlanEntry(
                device_id=command.device,
                desired=command.action,
                current=current,
                decision=decision,
                reason=reason,
            )
        )
    return ReconciliationPlan(entries=tuple(entries), created_at=time.time())


def dispatch(
    reconciliation: ReconciliationPlan,
    transport,
    registry: DeviceRegistry,
) -> DispatchReport:
    """Publish the act entries in plan order, recording an optimistic state per send.

    On backpressure the remaining entries stay unsent (no automatic retry);
    the report marks exactly which entries went out.
    """
    acts = reconciliation.act_entries()
    outcomes: list[DispatchOutcome] = []
    blocked = False
    for entry in acts:
        if blocked:
            outcomes.append(
                DispatchOutcome(entry.device_id, entry.desired, sent=False, error="not attempted")
            )
            continue
        try:
            transport.publish_command(entry.device_id, entry.desired)
        except (BackpressureError, TransportError) as exc:
            logger.warning("dispatch for %s halted: %s", entry.device_id, exc)
            outcomes.append(
                DispatchOutcome(entry.device_id, entry.desired, sent=False, error=str(exc))
            )
            blocked = True
            continue
        dispatched_at = time.time()
        registry.apply_optimistic(entry.device_id, entry.desired, dispatched_at)
        outcomes.append(
            DispatchOutcome(entry.device_id, entry.desired, sent=True, dispatched_at=dispatched_at)
        )
    return DispatchReport(outcomes=tuple(outcomes))
