"""Discrete-event core: actors, authenticated channels, reliable delivery.

Time is an integer tick counter. Channels come into existence only after
both endpoints' identity certificates validate against the consortium root
and each side proves possession of its certified key by signing a fresh
challenge. Per-channel delivery is FIFO exactly-once: injected drop,
duplicate and reorder faults are recovered through retransmission and
per-direction sequence numbers, so handlers always observe messages once
and in order. Every send is logged to the trace and to a wire log holding
the canonical envelope bytes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .. import codec, crypto, pki
from .messages import MessageBody
from .trace import Assertion, ScenarioTrace, TraceEvent


class NetsimError(Exception):
    pass


class PeerCertInvalid(NetsimError):
    def __init__(self, peer: str, report: pki.ValidationReport | None, note: str = ""):
        detail = report.verdict.value if report else note
        super().__init__(f"peer {peer}: {detail}")
        self.peer = peer
        self.report = report


class ChannelClosed(NetsimError):
    pass


class ActorKind(Enum):
    VASP = "Vasp"
    IDENTITY_PROVIDER = "IdentityProvider"
    CLAIMS_PROVIDER = "ClaimsProvider"
    AUTHORIZATION_SERVER = "AuthorizationServer"
    CLAIMS_STORE = "ClaimsStore"
    INSURER = "Insurer"
    CUSTOMER = "Customer"
    LEDGER_NODE = "LedgerNode"


@dataclass(frozen=True)
class Envelope:
    channel_id: int
    seq: int
    sender: str
    body: MessageBody
    sent_at: int


@dataclass
class _Direction:
    queue: list[Envelope] = field(default_factory=list)
    next_seq: int = 0
    expected: int = 0
    pending: dict[int, Envelope] = field(default_factory=dict)


class SecureChannel:
    """Mutually authenticated, reliable, ordered message pipe."""

    def __init__(self, channel_id: int, a: str, b: str,
                 peer_cert_serials: tuple[int, int], established_at: int):
        self.id = channel_id
        self.a = a
        self.b = b
        self.peer_cert_serials = peer_cert_serials
        self.established_at = established_at
        self.open = True
        self.transcript: list[Envelope] = []
        self._dirs = {a: _Direction(), b: _Direction()}  # keyed by sender

    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def other(self, name: str) -> str:
        if name == self.a:
            return self.b
        if name == self.b:
            return self.a
        raise NetsimError(f"{name} is not an endpoint of channel {self.id}")

    def peer_serial(self, name: str) -> int:
        """Certificate serial of the endpoint ``name`` (its own serial)."""
        return self.peer_cert_serials[0 if name == self.a else 1]

    def close(self) -> None:
        self.open = False


@dataclass
class FaultConfig:
    """Per-message transport faults; recovery keeps delivery exactly-once."""

    drop_rate: float = 0.0
    duplicate_rate: float = 0.0
    reorder_rate: float = 0.0
    partitioned: bool = False


class Simulation:
    """Single logical event loop owning actors, channels and the trace."""

    def __init__(self, seed: int, scenario: str = "adhoc",
                 faults: FaultConfig | None = None):
        self.seed = seed
        self.now = 0
        self.faults = faults or FaultConfig()
        self.rng = random.Random(
            int.from_bytes(crypto.derive_seed(crypto.seed_from_int(seed), "netsim"),
                           "big"))
        self.trace = ScenarioTrace(scenario=scenario, seed=seed)
        self.channels: list[SecureChannel] = []
        self.wire_log: list[tuple[str, bytes]] = []
        self._actors: dict[str, ActorKind] = {}
        self._handlers: dict[str, object] = {}
        self._tick_hooks: list[object] = []

    # -- actors and trace -----------------------------------------------------

    def register_actor(self, name: str, kind: ActorKind, handler=None) -> None:
        if name in self._actors:
            raise NetsimError(f"duplicate actor id {name!r}")
        self._actors[name] = kind
        if handler is not None:
            self._handlers[name] = handler

    def actor_kind(self, name: str) -> ActorKind:
        return self._actors[name]

    def emit(self, actor: str, event: str, payload=None, detail: str = "") -> TraceEvent:
        content = codec.canonical_encode(payload) if payload is not None \
            else detail.encode("utf-8")
        ev = TraceEvent(self.now, actor, event,
                        crypto.digest(content)[:8].hex(), detail)
        self.trace.events.append(ev)
        return ev

    def assert_that(self, name: str, passed: bool, note: str = "") -> bool:
        self.trace.assertions.append(Assertion(name, bool(passed), note))
        return bool(passed)

    def nonce(self) -> bytes:
        return self.rng.getrandbits(256).to_bytes(32, "big")

    def add_tick_hook(self, hook) -> None:
        self._tick_hooks.append(hook)

    # -- channels ---------------------------------------------------------------

    def establish_channel(self, a, b, root_public_key: bytes,
                          revocation_list: pki.RevocationList) -> SecureChannel:
        """Mutual authentication: both certificates must chain-validate and
        both peers must prove possession of their certified keys."""
        if self.faults.partitioned:
            self.emit("sim", "netsim.channel_refused",
                      detail=f"a={a.name} b={b.name} reason=partitioned")
            raise PeerCertInvalid(b.name, None, "network partitioned")
        for us, peer in ((a, b), (b, a)):
            report = pki.validate_chain(peer.identity_cert, root_public_key,
                                        revocation_list, self.now)
            if not report.valid:
                self.emit(us.name, "netsim.channel_refused",
                          detail=f"peer={peer.name} verdict={report.verdict.value}")
                raise PeerCertInvalid(peer.name, report)
            challenge = self.nonce()
            proof = peer.prove_possession(challenge)
            if not crypto.verify(peer.identity_cert.subject_public_key,
                                 challenge, proof):
                self.emit(us.name, "netsim.channel_refused",
                          detail=f"peer={peer.name} verdict=PossessionProofFailed")
                raise PeerCertInvalid(peer.name, None, "possession proof failed")
        channel = SecureChannel(
            channel_id=len(self.channels) + 1,
            a=a.name, b=b.name,
            peer_cert_serials=(a.identity_cert.serial, b.identity_cert.serial),
            established_at=self.now)
        self.channels.append(channel)
        self.emit("sim", "netsim.channel_established",
                  detail=f"ch={channel.id} a={a.name} b={b.name}")
        return channel

    def send(self, channel: SecureChannel, sender: str, body: MessageBody) -> Envelope:
        if not channel.open:
            raise ChannelClosed(f"channel {channel.id} is closed")
        direction = channel._dirs[sender]
        env = Envelope(channel.id, direction.next_seq, sender, body, self.now)
        direction.next_seq += 1
        direction.queue.append(env)
        channel.transcript.append(env)
        self.wire_log.append((type(body).__name__, codec.canonical_encode(env)))
        self.emit(sender, "netsim.sent", payload=body,
                  detail=f"msg={type(body).__name__} ch={channel.id} seq={env.seq}")
        return env

    # -- event loop ---------------------------------------------------------------

    def step(self) -> int:
        """Advance one tick; deliver in-flight messages, run handlers."""
        self.now += 1
        deliveries: list[tuple[SecureChannel, str, Envelope]] = []
        fault = (self.faults.drop_rate or self.faults.duplicate_rate
                 or self.faults.reorder_rate)
        for channel in list(self.channels):
            for sender in channel.endpoints():
                direction = channel._dirs[sender]
                if not direction.queue:
                    continue
                queue = list(direction.queue)
                direction.queue.clear()
                if fault and self.faults.reorder_rate and len(queue) > 1 \
                        and self.rng.random() < self.faults.reorder_rate:
                    self.rng.shuffle(queue)
                arrivals: list[Envelope] = []
                for env in queue:
                    if fault and self.rng.random() < self.faults.drop_rate:
                        direction.queue.append(env)  # retransmit next tick
                        continue
                    arrivals.append(env)
                    if fault and self.rng.random() < self.faults.duplicate_rate:
                        arrivals.append(env)
                recipient = channel.other(sender)
                for env in arrivals:
                    if env.seq < direction.expected:
                        continue  # duplicate of something already delivered
                    direction.pending.setdefault(env.seq, env)
                while direction.expected in direction.pending:
                    env = direction.pending.pop(direction.expected)
                    direction.expected += 1
                    deliveries.append((channel, recipient, env))
        for channel, recipient, env in deliveries:
            self.emit(recipient, "netsim.delivered",
                      detail=f"msg={type(env.body).__name__} ch={channel.id} "
                             f"seq={env.seq} from={env.sender}")
            handler = self._handlers.get(recipient)
            if handler is not None:
                handler(channel, env)
        for hook in self._tick_hooks:
            hook(self.now)
        return len(deliveries)

    def in_flight(self) -> int:
        return sum(len(ch._dirs[s].queue) + len(ch._dirs[s].pending)
                   for ch in self.channels for s in ch.endpoints())

    def run_until_quiet(self, max_steps: int = 1000) -> None:
        for _ in range(max_steps):
            self.step()
            if self.in_flight() == 0:
                return
        raise NetsimError(f"messages still in flight after {max_steps} steps")
