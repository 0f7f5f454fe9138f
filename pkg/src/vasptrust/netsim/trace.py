"""Deterministic scenario traces: ordered events plus terminal assertions.

A trace renders to line-oriented text with a stable field order, so the
same (scenario, config, seed) always produces byte-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class TraceEvent:
    time: int
    actor: str
    event: str
    digest: str
    detail: str

    def line(self) -> str:
        detail = f" {self.detail}" if self.detail else ""
        return f"{self.time:06d} {self.actor} {self.event} {self.digest}{detail}"


@dataclass(frozen=True)
class Assertion:
    name: str
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = f" {self.note}" if self.note else ""
        return f"assert {self.name} {status}{note}"


@dataclass
class ScenarioTrace:
    scenario: str
    seed: int
    events: list[TraceEvent] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.assertions) and all(a.passed for a in self.assertions)

    def find(self, event: str) -> list[TraceEvent]:
        return [e for e in self.events if e.event == event]

    def assertion(self, name: str) -> Assertion:
        for a in self.assertions:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"# scenario={self.scenario} seed={self.seed}"]
        lines.extend(e.line() for e in self.events)
        lines.extend(a.line() for a in self.assertions)
        lines.append(f"# result={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def parse_trace_text(text: str) -> ScenarioTrace:
    """Rebuild a trace from its text form (used by report generation)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0]
    fields = dict(part.split("=", 1) for part in header.lstrip("# ").split())
    trace = ScenarioTrace(scenario=fields["scenario"], seed=int(fields["seed"]))
    for ln in lines[1:]:
        if ln.startswith("# result="):
            continue
        if ln.startswith("assert "):
            parts = ln.split(" ", 3)
            trace.assertions.append(Assertion(
                name=parts[1], passed=parts[2] == "PASS",
                note=parts[3] if len(parts) > 3 else ""))
        else:
            parts = ln.split(" ", 4)
            trace.events.append(TraceEvent(
                time=int(parts[0]), actor=parts[1], event=parts[2],
                digest=parts[3], detail=parts[4] if len(parts) > 4 else ""))
    return trace
