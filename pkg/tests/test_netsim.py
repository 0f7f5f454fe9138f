"""Channels, reliable delivery under faults, and simulation plumbing."""

from __future__ import annotations

import pytest

from conftest import make_subject, seed
from vasptrust import crypto, pki
from vasptrust.netsim import (ActorKind, ChannelClosed, FaultConfig,
                              PeerCertInvalid, Simulation)
from vasptrust.netsim.messages import LookupRequest
from vasptrust.netsim.nodes import DishonestNode, Node


class Recorder(Node):
    """Channel endpoint that records every delivered body in order."""

    def __init__(self, sim, name, identity_cert, identity_key):
        super().__init__(name, identity_cert, identity_key)
        self.sim = sim
        self.received = []

    def handle(self, channel, envelope):
        self.received.append(envelope.body)


def make_pair(sim, root, node_cls_b=Recorder):
    nodes = []
    for i, cls in enumerate((Recorder, node_cls_b)):
        key = crypto.generate_keypair(seed(f"node{i}:{cls.__name__}"))
        cert = root.issue_identity_cert(make_subject(500 + i), key.public_key,
                                        0, 10_000)
        if cls is Recorder:
            node = Recorder(sim, f"rec:{i}", cert, key)
        else:
            node = cls(f"rec:{i}", cert, key)
        sim.register_actor(node.name, ActorKind.VASP,
                           getattr(node, "handle", None))
        nodes.append(node)
    return nodes


def test_channel_between_valid_members(root):
    sim = Simulation(seed=1)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    assert channel.endpoints() == (a.name, b.name)
    assert channel.peer_cert_serials == (a.identity_cert.serial,
                                         b.identity_cert.serial)


def test_revoked_peer_refused(root):
    sim = Simulation(seed=2)
    a, b = make_pair(sim, root)
    revocation_list = root.revoke(b.identity_cert.serial,
                                  pki.RevocationReason.KEY_COMPROMISE, 1)
    with pytest.raises(PeerCertInvalid) as err:
        sim.establish_channel(a, b, root.public_key, revocation_list)
    assert err.value.report.verdict is pki.Verdict.REVOKED


def test_possession_proof_failure_refused(root):
    sim = Simulation(seed=3)
    a, b = make_pair(sim, root, node_cls_b=DishonestNode)
    with pytest.raises(PeerCertInvalid):
        sim.establish_channel(a, b, root.public_key, root.revocation_list)
    refusals = sim.trace.find("netsim.channel_refused")
    assert refusals and "PossessionProofFailed" in refusals[-1].detail


def test_partition_fails_establishment(root):
    sim = Simulation(seed=4, faults=FaultConfig(partitioned=True))
    a, b = make_pair(sim, root)
    with pytest.raises(PeerCertInvalid):
        sim.establish_channel(a, b, root.public_key, root.revocation_list)


def test_send_then_step_delivers_once(root):
    sim = Simulation(seed=5)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    sim.send(channel, a.name, LookupRequest(1, "x@y.com"))
    sim.run_until_quiet()
    assert b.received == [LookupRequest(1, "x@y.com")]


def test_closed_channel_refuses_sends(root):
    sim = Simulation(seed=6)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    channel.close()
    with pytest.raises(ChannelClosed):
        sim.send(channel, a.name, LookupRequest(1, "x@y.com"))


@pytest.mark.parametrize("faults", [
    FaultConfig(),
    FaultConfig(duplicate_rate=0.4),
    FaultConfig(drop_rate=0.3),
    FaultConfig(reorder_rate=0.6),
    FaultConfig(drop_rate=0.2, duplicate_rate=0.2, reorder_rate=0.5),
])
def test_exactly_once_in_order_delivery(root, faults):
    sim = Simulation(seed=7, faults=faults)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    count = 1000
    for i in range(count):
        sim.send(channel, a.name, LookupRequest(i, "perm@check.com"))
    sim.run_until_quiet(max_steps=5000)
    assert [m.request_seq for m in b.received] == list(range(count))


def test_bidirectional_sequences_independent(root):
    sim = Simulation(seed=8)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    sim.send(channel, a.name, LookupRequest(10, "a@b.c"))
    sim.send(channel, b.name, LookupRequest(20, "d@e.f"))
    sim.run_until_quiet()
    assert a.received == [LookupRequest(20, "d@e.f")]
    assert b.received == [LookupRequest(10, "a@b.c")]


def test_every_wire_message_bound_to_channel(root):
    sim = Simulation(seed=9)
    a, b = make_pair(sim, root)
    channel = sim.establish_channel(a, b, root.public_key, root.revocation_list)
    for i in range(5):
        sim.send(channel, a.name, LookupRequest(i, "x@y.z"))
    sim.run_until_quiet()
    assert len(sim.wire_log) == 5
    assert len(channel.transcript) == 5
    assert all(env.channel_id == channel.id for env in channel.transcript)


def test_trace_is_deterministic():
    def run():
        root = pki.create_consortium_root("TestNet", seed("det-root"))
        sim = Simulation(seed=11, faults=FaultConfig(drop_rate=0.2))
        a, b = make_pair(sim, root)
        channel = sim.establish_channel(a, b, root.public_key,
                                        root.revocation_list)
        for i in range(30):
            sim.send(channel, a.name, LookupRequest(i, "t@u.v"))
        sim.run_until_quiet()
        return sim.trace.to_text()

    assert run() == run()


def test_duplicate_actor_ids_rejected(root):
    sim = Simulation(seed=12)
    sim.register_actor("x", ActorKind.CUSTOMER)
    with pytest.raises(Exception):
        sim.register_actor("x", ActorKind.CUSTOMER)
