"""End-to-end scenarios over the simulated network.

  S1  asset transfer: lookup, signed payload exchange both directions,
      consent checks, on-chain confirmation, correlation
  S2  claims gathering: policy, authorization token, fetch, consent receipt
  S3  federation convergence: advertisement flooding rounds, remote lookup
  S4  wallet on-/off-boarding with attestation checkpoints and insurer audit
  S5  multi-match lookup: the transfer halts instead of guessing a VASP

Each scenario appends terminal assertions to the trace; run_scenario is
byte-reproducible for a fixed (name, config, seed).
"""

from __future__ import annotations

from collections import deque

from .. import claims as claims_mod
from .. import wallet
from ..config import TopologyConfig
from ..resolver import parse_identifier
from ..travel_rule import ConsentDirection
from .trace import ScenarioTrace
from .world import World, build_world


class ScenarioError(Exception):
    pass


class UnknownScenario(ScenarioError):
    pass


class ScenarioAssertionFailed(ScenarioError):
    def __init__(self, trace: ScenarioTrace):
        failed = [a.name for a in trace.assertions if not a.passed]
        super().__init__(f"{trace.scenario}: failed assertions {failed}")
        self.trace = trace


def graph_diameter(graph: dict[int, list[int]]) -> int:
    """Longest shortest path over the federation graph (BFS from each node)."""
    nodes = sorted(graph)
    diameter = 0
    for start in nodes:
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in graph.get(u, []):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if len(dist) < len(nodes):
            raise ScenarioError("federation graph is not connected")
        diameter = max(diameter, max(dist.values()))
    return diameter


def ground_truth_map(world: World) -> dict[str, list[int]]:
    """Oracle: identifier -> sorted VASP numbers, unioned over local tables."""
    truth: dict[str, set[int]] = {}
    for number in sorted(world.vasps):
        for rendered in world.vasps[number].resolver.local_identifiers():
            truth.setdefault(rendered, set()).add(number)
    return {k: sorted(v) for k, v in sorted(truth.items())}


def flood_round(world: World,
                channels_by_vasp: dict[int, list] | None = None) -> None:
    """One advertisement flooding round: every VASP sends everything it
    knows to every neighbor, then one delivery step."""
    channels = channels_by_vasp or world.federation_channels()
    for number in sorted(world.vasps):
        world.vasps[number].flood_advertisements(channels[number])
    world.sim.run_until_quiet()


def converge_federation(world: World, max_rounds: int | None = None) -> int:
    """Flood until every resolver equals the ground truth; returns rounds."""
    truth = ground_truth_map(world)
    channels = world.federation_channels()
    limit = max_rounds if max_rounds is not None \
        else graph_diameter(world.config.federation_graph)
    rounds_used = 0
    for round_no in range(1, limit + 1):
        flood_round(world, channels)
        rounds_used = round_no
        converged = sum(
            1 for n in sorted(world.vasps)
            if world.vasps[n].resolver.resolve_map() == truth)
        world.sim.emit("sim", "federation.round",
                       detail=f"round={round_no} converged={converged}/{len(world.vasps)}")
        if converged == len(world.vasps):
            break
    return rounds_used


# ---------------------------------------------------------------------------
# S1: end-to-end transfer
# ---------------------------------------------------------------------------

def scenario_s1(world: World, params: dict) -> None:
    sim = world.sim
    ovasp = world.vasp(int(params["originator_vasp"]))
    originator = params["originator_customer"]
    identifier = params["beneficiary_identifier"]
    beneficiary_name = params["beneficiary_name"]
    amount = int(params["amount"])

    converge_federation(world)

    if params.get("grant_originator_consent", True):
        ovasp.grant_consent(originator,
                            ConsentDirection.SEND_INFO_TO_COUNTERPARTY, None)

    hits = ovasp.local_lookup(parse_identifier(identifier))
    world.assert_that("lookup_hit", len(hits) == 1, f"vasps={hits}")
    if len(hits) != 1:
        reason = "beneficiary_unknown" if not hits else "multiple_vasps"
        sim.emit(ovasp.name, "travel_rule.transfer_halted",
                 detail=f"identifier={identifier} reason={reason} count={len(hits)}")
        for name in ("payload_outbound_complete", "payload_inbound_complete",
                     "consent_originator", "consent_beneficiary",
                     "ledger_confirmed", "correlation_recorded_once"):
            world.assert_that(name, False, "transfer halted before this step")
        return

    bvasp = world.vasp(hits[0])
    if params.get("grant_beneficiary_consent", True):
        beneficiary_ids = sorted(
            bvasp.resolver.local_customers_for(parse_identifier(identifier)))
        bvasp.grant_consent(beneficiary_ids[0], ConsentDirection.RECEIVE_ASSETS,
                            ovasp.vasp_number)

    channel = world.channel_between(ovasp, bvasp)
    payload = ovasp.initiate_transfer(channel, originator, beneficiary_name,
                                      identifier, bvasp.vasp_number, amount)
    sim.run_until_quiet()
    world.confirm_block()
    pending = ovasp.pending[payload.payload_id]
    records = ovasp.correlate_pending() if pending.state == "submitted" else []

    outbound = [e for e in sim.trace.events
                if e.event == "travel_rule.payload_validated"
                and "direction=outbound" in e.detail and "present=5/5" in e.detail]
    inbound = [e for e in sim.trace.events
               if e.event == "travel_rule.payload_validated"
               and "direction=inbound" in e.detail
               and "present=5/5" in e.detail and "signature=ok" in e.detail]
    world.assert_that("payload_outbound_complete", len(outbound) >= 2,
                      f"validated_outbound={len(outbound)}")
    world.assert_that("payload_inbound_complete", len(inbound) >= 2,
                      f"validated_inbound={len(inbound)}")
    world.assert_that(
        "consent_originator",
        ovasp.consents.check(originator,
                             ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                             bvasp.vasp_number, sim.now))
    beneficiary_ids = sorted(
        bvasp.resolver.local_customers_for(parse_identifier(identifier)))
    world.assert_that(
        "consent_beneficiary",
        bool(beneficiary_ids) and bvasp.consents.check(
            beneficiary_ids[0], ConsentDirection.RECEIVE_ASSETS,
            ovasp.vasp_number, sim.now))
    confirmed = (pending.tx_id is not None
                 and world.ledger.query_tx(pending.tx_id).block_height > 0)
    world.assert_that("ledger_confirmed", confirmed,
                      f"state={pending.state}")
    world.assert_that("correlation_recorded_once",
                      len(records) == 1 and len(ovasp.correlations.records) == 1,
                      f"records={len(ovasp.correlations.records)}")


def _require_entity(mapping: dict, key, what: str):
    try:
        return mapping[key]
    except KeyError:
        raise ScenarioError(
            f"scenario parameter refers to {what} {key!r}, "
            f"which this topology does not configure") from None


# ---------------------------------------------------------------------------
# S2: claims gathering with consent receipt
# ---------------------------------------------------------------------------

def scenario_s2(world: World, params: dict) -> None:
    sim = world.sim
    owner = params["owner_customer"]
    vasp = _require_entity(world.vasps, int(params["requesting_vasp"]), "VASP")
    attributes = tuple(params["attributes"])
    purpose = params["purpose"]

    store_node = _require_entity(world.stores, owner, "a claims store for")
    server_node = _require_entity(world.auth_servers, owner,
                                  "an authorization server for")
    policy = claims_mod.AccessPolicy(
        owner_customer_ref=owner,
        allowed_vasp_numbers=frozenset({vasp.vasp_number}),
        readable_attributes=frozenset(attributes),
        usage_purpose=purpose)
    store_node.store.set_policy(owner, policy, now=sim.now)
    sim.emit(f"customer:{owner}", "claims.policy_set",
             detail=f"store={store_node.name} vasps=[{vasp.vasp_number}] "
                    f"attrs={sorted(attributes)} purpose={purpose}")

    auth_channel = world.channel_between(vasp, server_node)
    vasp.request_claims_authorization(auth_channel, attributes, purpose)
    sim.run_until_quiet()

    token = vasp.claims_token
    world.assert_that("token_issued", token is not None,
                      vasp.claims_denial or "")
    world.assert_that(
        "token_scope_within_policy",
        token is not None
        and set(token.permitted_attributes) <= policy.readable_attributes)

    if params.get("withdraw_before_fetch", False):
        store_node.store.revoke_consent(owner, sim.now)
        sim.emit(f"customer:{owner}", "claims.consent_revoked",
                 detail=f"store={store_node.name}")

    store_channel = world.channel_between(vasp, store_node)
    if token is not None:
        vasp.fetch_claims(store_channel)
        sim.run_until_quiet()

    released = list(vasp.fetched_claims)
    receipts = list(vasp.consent_receipts)
    world.assert_that("claims_released", len(released) >= 1,
                      f"claims={len(released)}")
    world.assert_that("one_receipt_per_fetch",
                      len(receipts) == len(store_node.store.receipts) == 1,
                      f"receipts={len(receipts)}")
    release_ok = bool(receipts) and token is not None and (
        set(receipts[0].attributes_released)
        <= set(token.permitted_attributes)
        <= policy.readable_attributes)
    world.assert_that("release_within_token_within_policy", release_ok)
    verified = all(
        claims_mod.verify_claim(
            c, world.directory.provider_keys.get(c.issuer, b""), sim.now)
        is claims_mod.ClaimVerdict.VALID
        for c in released)
    world.assert_that("claim_signatures_valid",
                      bool(released) and verified)
    world.assert_that("receipt_verifies",
                      bool(receipts) and store_node.store.verify_receipt(receipts[0]))


# ---------------------------------------------------------------------------
# S3: federation convergence
# ---------------------------------------------------------------------------

def scenario_s3(world: World, params: dict) -> None:
    sim = world.sim
    diameter = graph_diameter(world.config.federation_graph)
    rounds = converge_federation(world, max_rounds=diameter)

    truth = ground_truth_map(world)
    converged = all(world.vasps[n].resolver.resolve_map() == truth
                    for n in sorted(world.vasps))
    world.assert_that("federation_converged", converged,
                      f"rounds={rounds}")
    world.assert_that("rounds_within_diameter", rounds <= diameter,
                      f"rounds={rounds} diameter={diameter}")

    # Exercise the protected remote lookup API across the federation.
    numbers = sorted(world.vasps)
    requester, responder = world.vasps[numbers[0]], world.vasps[numbers[-1]]
    target = None
    for rendered, owners in truth.items():
        if owners == [numbers[-1]]:
            target = rendered
            break
    if target is not None and requester is not responder:
        channel = world.channel_between(requester, responder)
        requester.remote_lookup(channel, target, request_seq=1)
        sim.run_until_quiet()
        responses = requester.remote_lookups
        world.assert_that(
            "remote_lookup_served",
            len(responses) == 1 and list(responses[0].vasp_numbers) == truth[target],
            f"response={[list(r.vasp_numbers) for r in responses]}")
    else:
        world.assert_that("remote_lookup_served", True, "skipped: single node")


# ---------------------------------------------------------------------------
# S4: wallet boarding with attestation and insurer audit
# ---------------------------------------------------------------------------

def scenario_s4(world: World, params: dict) -> None:
    sim = world.sim
    vasp = _require_entity(world.vasps, int(params["vasp"]), "VASP")
    customer = params["customer"]
    device_id = f"wdev:{customer}@{vasp.vasp_number}"
    device = _require_entity(world.devices, device_id, "a wallet device")

    before = world.registry.status(device_id)
    report = vasp.onboard(customer, device)
    world.confirm_block()
    world.assert_that("onboard_accepted", report.accepted, report.reason)
    world.assert_that("key_transition_recorded",
                      report.key_transition is not None)
    world.assert_that(
        "registry_regulated_after_onboard",
        world.registry.status(device_id).classification
        is wallet.WalletClass.REGULATED
        and before.classification is wallet.WalletClass.PRIVATE)

    for _ in range(int(params.get("supervision_steps", 25))):
        sim.step()
    supervision = vasp.supervision[customer]
    world.assert_that("attestation_checkpoints_taken",
                      len(supervision.checkpoints) >= 3,
                      f"checkpoints={len(supervision.checkpoints)}")

    if params.get("insurer_audit", True) and world.insurer is not None:
        channel = world.channel_between(world.insurer, vasp)
        world.insurer.request_audit(channel, device_id)
        sim.run_until_quiet()
        verdict = world.insurer.audit_verdicts.get(device_id)
        world.assert_that("insurer_audit_pass",
                          verdict is not None and verdict.passed,
                          "" if verdict is None else
                          f"findings={list(verdict.key_findings)}")

    supervised = list(supervision.supervised_handles)
    off_report = vasp.offboard(customer, device)
    world.assert_that("offboard_accepted", off_report.accepted)
    evidence = off_report.erasure_evidence
    erased_ok = evidence is not None and all(
        r.erased for r in evidence.key_reports
        if r.handle in supervised and not r.migratable)
    world.assert_that("erasure_proven", erased_ok)
    world.assert_that(
        "registry_private_after_offboard",
        world.registry.status(device_id).classification is wallet.WalletClass.PRIVATE)


# ---------------------------------------------------------------------------
# S5: ambiguous lookup halts the transfer
# ---------------------------------------------------------------------------

def scenario_s5(world: World, params: dict) -> None:
    sim = world.sim
    ovasp = world.vasp(int(params["originator_vasp"]))
    identifier = params["beneficiary_identifier"]

    converge_federation(world)
    supply_before = world.ledger.total_supply()
    height_before = world.ledger.height

    hits = ovasp.local_lookup(parse_identifier(identifier))
    world.assert_that("multi_match_detected", len(hits) > 1, f"vasps={hits}")
    sim.emit(ovasp.name, "travel_rule.transfer_halted",
             detail=f"identifier={identifier} reason=multiple_vasps "
                    f"count={len(hits)} vasps={hits}")
    world.assert_that(
        "transfer_halted",
        bool(sim.trace.find("travel_rule.transfer_halted")))
    no_tx = (world.ledger.height == height_before
             and world.ledger.total_supply() == supply_before
             and not sim.trace.find("ledger.tx_submitted"))
    world.assert_that("no_ledger_transfer", no_tx)


SCENARIOS = {
    "S1": scenario_s1,
    "S2": scenario_s2,
    "S3": scenario_s3,
    "S4": scenario_s4,
    "S5": scenario_s5,
}


def run_scenario(name: str, config: TopologyConfig,
                 seed: int | None = None,
                 overrides: dict | None = None,
                 check: bool = False) -> ScenarioTrace:
    """Build the world and run one named scenario.

    ``overrides`` are merged over the config's scenario parameters;
    ``seed`` replaces the config seed. With ``check`` the call raises
    ScenarioAssertionFailed (carrying the trace) on any failed assertion.
    """
    if name not in SCENARIOS:
        raise UnknownScenario(
            f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}")
    if seed is not None:
        import dataclasses
        config = dataclasses.replace(config, seed=seed)
    params = dict(config.scenario_params.get(name, {}))
    if overrides:
        params.update(overrides)
    world = build_world(config, scenario=name)
    SCENARIOS[name](world, params)
    trace = world.sim.trace
    if check and not trace.passed:
        raise ScenarioAssertionFailed(trace)
    return trace


def run_scenario_with_world(name: str, config: TopologyConfig,
                            overrides: dict | None = None
                            ) -> tuple[ScenarioTrace, World]:
    """run_scenario variant returning the world, for inspection in tests."""
    if name not in SCENARIOS:
        raise UnknownScenario(
            f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}")
    params = dict(config.scenario_params.get(name, {}))
    if overrides:
        params.update(overrides)
    world = build_world(config, scenario=name)
    SCENARIOS[name](world, params)
    return world.sim.trace, world
