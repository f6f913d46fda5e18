"""Message log for the broadcast channel and the pairwise secure channels.

A transcript is the audit artifact of one run. Its JSON form has the
top-level fields ``config``, ``messages``, ``phases`` and ``result`` in
that order and is byte-stable for a given configuration and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

BROADCAST = "broadcast"
SECURE = "secure"

MESSAGE_KINDS = frozenset(
    {
        "HashRegistration",
        "PivotAnnounce",
        "SubsequenceTransfer",
        "ReceiptConfirm",
        "DecoyReveal",
        "DecoyResults",
        "ChallengeShare",
        "VerifySpec",
        "VerifyAnnounce",
        "TDCSubmission",
        "KeyAnnounce",
        "Abort",
    }
)


class TranscriptError(ValueError):
    pass


@dataclass
class Message:
    seq: int
    kind: str
    channel: str
    sender: str
    receiver: Optional[str]
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "channel": self.channel,
            "from": self.sender,
            "to": self.receiver,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Message:
        try:
            msg = cls(d["seq"], d["kind"], d["channel"], d["from"], d["to"], d["payload"])
        except KeyError as exc:
            raise TranscriptError(f"message missing field {exc}") from None
        if msg.kind not in MESSAGE_KINDS:
            raise TranscriptError(f"unknown message kind {msg.kind!r}")
        if msg.channel == BROADCAST:
            if msg.receiver is not None:
                raise TranscriptError("broadcast message must not name a receiver")
        elif msg.channel == SECURE:
            if not msg.receiver:
                raise TranscriptError("secure message needs a receiver")
        else:
            raise TranscriptError(f"unknown channel {msg.channel!r}")
        return msg


@dataclass
class Transcript:
    config: dict
    messages: list[Message] = field(default_factory=list)
    phases: list[dict] = field(default_factory=list)
    result: dict = field(default_factory=dict)
    # in-memory run artifacts (register, report, keys); never serialized
    extras: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def broadcast(self, kind: str, sender: str, payload: dict) -> Message:
        return self._post(kind, BROADCAST, sender, None, payload)

    def secure(self, kind: str, sender: str, receiver: str, payload: dict) -> Message:
        return self._post(kind, SECURE, sender, receiver, payload)

    def _post(self, kind, channel, sender, receiver, payload) -> Message:
        if kind not in MESSAGE_KINDS:
            raise TranscriptError(f"unknown message kind {kind!r}")
        msg = Message(len(self.messages) + 1, kind, channel, sender, receiver, payload)
        self.messages.append(msg)
        return msg

    def record(self, phase: str, **data: Any) -> dict:
        entry = {"phase": phase, **data}
        self.phases.append(entry)
        return entry

    @property
    def succeeded(self) -> bool:
        return self.result.get("status") == "success"

    @property
    def aborted(self) -> bool:
        return self.result.get("status") == "abort"

    @property
    def key(self) -> Optional[str]:
        return self.result.get("key")

    def phase_records(self, phase: str) -> list[dict]:
        return [p for p in self.phases if p["phase"] == phase]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "messages": [m.to_dict() for m in self.messages],
            "phases": self.phases,
            "result": self.result,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Transcript:
        return parse_transcript(json.loads(text))


def parse_transcript(data: dict) -> Transcript:
    """Validate a decoded transcript object and rebuild it."""
    if not isinstance(data, dict):
        raise TranscriptError("transcript must be a JSON object")
    expected = ["config", "messages", "phases", "result"]
    if list(data) != expected:
        raise TranscriptError(f"top-level fields must be {expected}, got {list(data)}")
    messages = [Message.from_dict(m) for m in data["messages"]]
    seqs = [m.seq for m in messages]
    if any(b <= a for a, b in zip(seqs, seqs[1:])):
        raise TranscriptError("sequence numbers must be strictly increasing")
    for p in data["phases"]:
        if not isinstance(p, dict) or "phase" not in p:
            raise TranscriptError("phase records need a 'phase' field")
    result = data["result"]
    status = result.get("status")
    if status == "success":
        if "key" not in result:
            raise TranscriptError("successful result needs a key")
    elif status == "abort":
        for name in ("phase", "check", "reason"):
            if name not in result:
                raise TranscriptError(f"abort result needs {name!r}")
        if "key" in result:
            raise TranscriptError("aborted run must not carry a key")
    else:
        raise TranscriptError(f"unknown result status {status!r}")
    return Transcript(data["config"], messages, list(data["phases"]), result)
