"""Actor state machines: VASPs, claims services, insurer.

Each node owns its state and mutates it only from its message handler or
its own public methods; there is no shared mutable state between nodes.
Nodes that terminate channels carry an EV identity certificate and prove
possession of its key during channel establishment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .. import claims as claims_mod
from .. import codec, crypto, pki, travel_rule, wallet
from ..ledger import Ledger, make_transfer
from ..resolver import (CustomerIdentifier, IdpDirectory, ResolverService,
                        Unauthorized, parse_identifier)
from ..travel_rule import (ConsentDirection, ConsentStore, CorrelationStore,
                           CustomerRecord, SignedPayload, TravelRulePayload)
from . import messages as msg
from .sim import Envelope, SecureChannel, Simulation


@dataclass
class VaspCerts:
    identity: pki.EvIdentityCertificate
    transaction: pki.SigningCertificate
    claims: pki.SigningCertificate


class ConsortiumDirectory:
    """Membership list every node holds: certificates, provider and device
    attestation public keys. Distribution is part of consortium operations;
    authenticity still rests on the root signature inside each certificate."""

    def __init__(self, root_public_key: bytes):
        self.root_public_key = root_public_key
        self.certs: dict[int, pki.Certificate] = {}
        self.members: dict[int, VaspCerts] = {}  # entity number -> certs
        self.provider_keys: dict[str, bytes] = {}
        self.device_attestation_keys: dict[str, bytes] = {}

    def add_member(self, certs: VaspCerts) -> None:
        number = certs.identity.subject.vasp_number
        self.members[number] = certs
        for cert in (certs.identity, certs.transaction, certs.claims):
            self.certs[cert.serial] = cert

    def add_service_identity(self, cert: pki.EvIdentityCertificate) -> None:
        self.certs[cert.serial] = cert

    def member(self, number: int) -> VaspCerts:
        return self.members[number]


class Node:
    """Channel-capable actor bound to an EV identity certificate."""

    def __init__(self, name: str, identity_cert: pki.EvIdentityCertificate,
                 identity_key: crypto.KeyPair):
        self.name = name
        self.identity_cert = identity_cert
        self._identity_key = identity_key

    def prove_possession(self, challenge: bytes) -> bytes:
        return crypto.sign(self._identity_key.private_key, challenge)


class DishonestNode(Node):
    """Presents a certificate whose key it does not actually hold."""

    def prove_possession(self, challenge: bytes) -> bytes:
        wrong = crypto.generate_keypair(crypto.digest(b"wrong-key" + challenge))
        return crypto.sign(wrong.private_key, challenge)


@dataclass
class PendingTransfer:
    payload: TravelRulePayload
    originator_id: str
    beneficiary_vasp: int
    state: str = "requested"
    tx_id: bytes | None = None


class VaspNode(Node):
    """A VASP: customers, resolver, consent ledger, travel-rule exchange,
    commingled-account treasury key, wallet supervision."""

    def __init__(self, sim: Simulation, vasp_number: int,
                 certs: VaspCerts,
                 identity_key: crypto.KeyPair,
                 tx_key: crypto.KeyPair,
                 claims_key: crypto.KeyPair,
                 ledger: Ledger,
                 directory: ConsortiumDirectory,
                 revocation_list_source,
                 registry: wallet.WalletRegistry,
                 approved_stacks: set[bytes]):
        super().__init__(f"vasp:{vasp_number}", certs.identity, identity_key)
        self.sim = sim
        self.vasp_number = vasp_number
        self.certs = certs
        self.tx_key = tx_key
        self.claims_key = claims_key
        self.ledger = ledger
        self.directory = directory
        self._revocation_list_source = revocation_list_source
        self.registry = registry
        self.approved_stacks = approved_stacks

        self.customer_ids: set[str] = set()
        self.customers: dict[str, CustomerRecord] = {}
        self.devices: dict[str, wallet.WalletDevice] = {}  # device_id -> device
        self.resolver = ResolverService(vasp_number, self.customer_ids)
        self.consents = ConsentStore(self.customer_ids)
        self.correlations = CorrelationStore()
        self.payload_store: list[tuple[str, SignedPayload]] = []
        self.supervision: dict[str, wallet.SupervisionRecord] = {}
        self.pending: dict[bytes, PendingTransfer] = {}
        self.remote_lookups: list[msg.LookupResponse] = []
        self.claims_token: claims_mod.AuthorizationToken | None = None
        self.claims_denial: str = ""
        self.fetched_claims: list[claims_mod.SignedClaim] = []
        self.consent_receipts: list[claims_mod.ConsentReceipt] = []

    @property
    def revocation_list(self) -> pki.RevocationList:
        return self._revocation_list_source()

    # -- customer management ---------------------------------------------------

    def add_customer(self, record: CustomerRecord,
                     identifiers: list[CustomerIdentifier],
                     idp_directories: dict[str, IdpDirectory]) -> None:
        self.customer_ids.add(record.customer_id)
        self.customers[record.customer_id] = record
        for ident in identifiers:
            idp = idp_directories.get(ident.domain_part.lower())
            self.resolver.register_identifier(record.customer_id, ident, idp)
            record.identifiers.append(ident)
            self.sim.emit(self.name, "resolver.identifier_registered",
                          detail=f"customer={record.customer_id} "
                                 f"identifier={ident.render()}"
                                 + (f" validated_by=idp:{idp.domain}" if idp else ""))

    def attach_device(self, customer_id: str, device: wallet.WalletDevice) -> None:
        self.devices[device.device_id] = device
        self.customers[customer_id].wallet_ref = device.device_id

    # -- consent -------------------------------------------------------------------

    def grant_consent(self, customer_id: str, direction: ConsentDirection,
                      counterparty: int | None) -> None:
        self.consents.record(customer_id, direction, counterparty, self.sim.now)
        scope = f" counterparty=vasp:{counterparty}" if counterparty else ""
        self.sim.emit(f"customer:{customer_id}", "travel_rule.consent_recorded",
                      detail=f"vasp={self.vasp_number} "
                             f"direction={direction.value}{scope}")

    def withdraw_consent(self, customer_id: str, direction: ConsentDirection,
                         counterparty: int | None) -> None:
        self.consents.withdraw(customer_id, direction, counterparty, self.sim.now)
        self.sim.emit(f"customer:{customer_id}", "travel_rule.consent_withdrawn",
                      detail=f"vasp={self.vasp_number} direction={direction.value}")

    # -- resolver -------------------------------------------------------------------

    def local_lookup(self, identifier: CustomerIdentifier) -> list[int]:
        hits = self.resolver.lookup(identifier, self.certs.identity,
                                    self.directory.root_public_key,
                                    self.revocation_list, self.sim.now)
        self.sim.emit(self.name, "resolver.lookup",
                      detail=f"identifier={identifier.render()} "
                             f"vasps={hits} count={len(hits)}")
        return hits

    def build_own_advertisement(self):
        adv = self.resolver.build_advertisement(self.claims_key.private_key,
                                                self.certs.claims.serial)
        self.sim.emit(self.name, "resolver.adv_built", payload=adv,
                      detail=f"seq={adv.sequence} identifiers={len(adv.identifiers)}")
        return adv

    def flood_advertisements(self, channels: list[SecureChannel]) -> None:
        """Send our own fresh advertisement plus every stored one to each
        neighbor; one flooding round of the link-state exchange."""
        advs = [self.build_own_advertisement()] + self.resolver.known_advertisements()
        for channel in channels:
            for adv in advs:
                self.sim.send(channel, self.name, msg.AdvertisementFlood(adv))

    def _merge_advertisement(self, adv) -> None:
        origin = self.directory.members.get(adv.vasp_number)
        if origin is None:
            outcome = "Rejected"
        else:
            outcome = self.resolver.merge_advertisement(
                adv, origin.claims, origin.identity,
                self.directory.root_public_key, self.revocation_list,
                self.sim.now).value
        self.sim.emit(self.name, "resolver.adv_merged",
                      detail=f"origin=vasp:{adv.vasp_number} seq={adv.sequence} "
                             f"outcome={outcome}")

    # -- travel rule exchange ---------------------------------------------------------

    def initiate_transfer(self, channel: SecureChannel, originator_id: str,
                          beneficiary_name: str, beneficiary_identifier: str,
                          beneficiary_vasp: int, amount: int) -> TravelRulePayload:
        originator = self.customers[originator_id]
        payload = travel_rule.build_payload(
            originator, beneficiary_name, beneficiary_identifier,
            beneficiary_vasp, amount, self.vasp_number)
        report = travel_rule.validate_payload(payload)
        self.sim.emit(self.name, "travel_rule.payload_validated", payload=payload,
                      detail=f"direction=outbound present={report.summary()} "
                             f"payload={payload.payload_id.hex()[:16]}")
        signed = travel_rule.sign_payload(
            self.claims_key.private_key, self.certs.claims, payload,
            self.directory.root_public_key, self.revocation_list, self.sim.now)
        self.payload_store.append(("outbound", signed))
        self.pending[payload.payload_id] = PendingTransfer(
            payload, originator_id, beneficiary_vasp)
        self.sim.send(channel, self.name, msg.TravelRuleRequest(signed))
        return payload

    def _verify_counterparty_payload(self, signed: SignedPayload,
                                     direction: str) -> bool:
        cert = self.directory.certs.get(signed.signer_cert_serial)
        ok = (isinstance(cert, pki.SigningCertificate)
              and travel_rule.verify_signed_payload(
                  signed, cert, self.directory.root_public_key,
                  self.revocation_list, self.sim.now))
        report = travel_rule.validate_payload(signed.payload)
        self.sim.emit(self.name, "travel_rule.payload_validated",
                      payload=signed.payload,
                      detail=f"direction={direction} present={report.summary()} "
                             f"signature={'ok' if ok else 'bad'} "
                             f"payload={signed.payload.payload_id.hex()[:16]}")
        return ok and report.passed

    def _on_travel_rule_request(self, channel: SecureChannel, env: Envelope) -> None:
        signed: SignedPayload = env.body.signed
        payload = signed.payload
        self.payload_store.append(("inbound", signed))

        def refuse(reason: str) -> None:
            self.sim.emit(self.name, "travel_rule.transfer_refused",
                          detail=f"payload={payload.payload_id.hex()[:16]} "
                                 f"reason={reason}")
            self.sim.send(channel, self.name, msg.TravelRuleResponse(
                payload.payload_id, False, reason, None))

        if not self._verify_counterparty_payload(signed, "inbound"):
            refuse("invalid_payload")
            return
        try:
            ident = parse_identifier(payload.beneficiary_account)
        except Exception:
            refuse("unparseable_beneficiary")
            return
        customer_ids = sorted(self.resolver.local_customers_for(ident))
        if not customer_ids:
            refuse("beneficiary_unknown")
            return
        beneficiary = self.customers[customer_ids[0]]
        if beneficiary.legal_name != payload.beneficiary_name:
            refuse("beneficiary_name_mismatch")
            return
        consent = self.consents.check(beneficiary.customer_id,
                                      ConsentDirection.RECEIVE_ASSETS,
                                      payload.originating_vasp_number, self.sim.now)
        self.sim.emit(self.name, "travel_rule.consent_checked",
                      detail=f"customer={beneficiary.customer_id} "
                             f"direction=ReceiveAssets ok={consent}")
        if not consent:
            refuse("beneficiary_consent_missing")
            return

        response_payload = TravelRulePayload(
            originator_name=payload.originator_name,
            originator_account=payload.originator_account,
            originator_identifying=payload.originator_identifying,
            beneficiary_name=beneficiary.legal_name,
            beneficiary_account=beneficiary.customer_id,
            originating_vasp_number=payload.originating_vasp_number,
            beneficiary_vasp_number=self.vasp_number,
            amount=payload.amount,
            correlation=travel_rule.CorrelationHint(
                travel_rule.HintKind.KEY_AMOUNT,
                expected_key=self.tx_key.public_key,
                expected_amount=payload.amount),
            payload_id=b"")
        response_payload = replace(
            response_payload,
            payload_id=travel_rule.compute_payload_id(response_payload))
        report = travel_rule.validate_payload(response_payload)
        self.sim.emit(self.name, "travel_rule.payload_validated",
                      payload=response_payload,
                      detail=f"direction=outbound present={report.summary()} "
                             f"payload={response_payload.payload_id.hex()[:16]}")
        response_signed = travel_rule.sign_payload(
            self.claims_key.private_key, self.certs.claims, response_payload,
            self.directory.root_public_key, self.revocation_list, self.sim.now)
        self.payload_store.append(("outbound", response_signed))
        self.sim.send(channel, self.name, msg.TravelRuleResponse(
            payload.payload_id, True, "", response_signed))

    def _on_travel_rule_response(self, channel: SecureChannel, env: Envelope) -> None:
        body: msg.TravelRuleResponse = env.body
        pending = self.pending.get(body.ack_payload_id)
        if pending is None:
            return
        if not body.accepted or body.signed is None:
            pending.state = "refused"
            self.sim.emit(self.name, "travel_rule.transfer_refused",
                          detail=f"payload={body.ack_payload_id.hex()[:16]} "
                                 f"reason={body.reason}")
            return
        if not self._verify_counterparty_payload(body.signed, "inbound"):
            pending.state = "refused"
            return
        self.payload_store.append(("inbound", body.signed))

        originator_consent = self.consents.check(
            pending.originator_id, ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
            pending.beneficiary_vasp, self.sim.now)
        self.sim.emit(self.name, "travel_rule.consent_checked",
                      detail=f"customer={pending.originator_id} "
                             f"direction=SendInfoToCounterparty ok={originator_consent}")
        self.sim.emit(self.name, "travel_rule.transfer_gate",
                      detail=f"payload={body.ack_payload_id.hex()[:16]} "
                             f"consent_originator={originator_consent} "
                             f"beneficiary_accepted=True")
        if not originator_consent:
            pending.state = "refused"
            self.sim.emit(self.name, "travel_rule.transfer_refused",
                          detail=f"payload={body.ack_payload_id.hex()[:16]} "
                                 f"reason=originator_consent_missing")
            return

        beneficiary_tx_key = self.directory.member(
            pending.beneficiary_vasp).transaction.subject_public_key
        tx = make_transfer(
            inputs=[(self.tx_key.public_key, pending.payload.amount)],
            outputs=[(beneficiary_tx_key, pending.payload.amount)],
            signers={self.tx_key.public_key:
                     lambda m: crypto.sign(self.tx_key.private_key, m)},
            memo_tag=pending.payload.payload_id)
        self.ledger.submit_transfer(tx)
        pending.tx_id = tx.tx_id
        pending.state = "submitted"
        self.sim.emit(self.name, "ledger.tx_submitted", payload=tx,
                      detail=f"tx={tx.tx_id.hex()[:16]} kind=customer_transfer "
                             f"amount={pending.payload.amount}")

    def correlate_pending(self) -> list[travel_rule.CorrelationRecord]:
        records = []
        for pending in self.pending.values():
            if pending.state != "submitted":
                continue
            record = self.correlations.correlate(
                pending.payload, self.ledger, (1, self.ledger.height))
            pending.state = "correlated"
            records.append(record)
            self.sim.emit(self.name, "travel_rule.correlated",
                          detail=f"payload={record.payload_id.hex()[:16]} "
                                 f"tx={record.tx_id.hex()[:16]} "
                                 f"output={record.output_index} "
                                 f"height={record.matched_at_height}")
        return records

    # -- remote resolver API ---------------------------------------------------------

    def remote_lookup(self, channel: SecureChannel, identifier: str,
                      request_seq: int) -> None:
        self.sim.send(channel, self.name,
                      msg.LookupRequest(request_seq, identifier))

    def _on_lookup_request(self, channel: SecureChannel, env: Envelope) -> None:
        body: msg.LookupRequest = env.body
        caller_serial = channel.peer_serial(env.sender)
        caller_cert = self.directory.certs.get(caller_serial)
        try:
            if caller_cert is None:
                raise Unauthorized("unknown caller certificate")
            hits = self.resolver.lookup(
                parse_identifier(body.identifier), caller_cert,
                self.directory.root_public_key, self.revocation_list, self.sim.now)
            response = msg.LookupResponse(body.request_seq, tuple(hits), "")
        except Unauthorized as exc:
            response = msg.LookupResponse(body.request_seq, (), str(exc))
        self.sim.emit(self.name, "resolver.remote_lookup",
                      detail=f"caller={env.sender} "
                             f"vasps={list(response.vasp_numbers)} "
                             f"error={response.error or '-'}")
        self.sim.send(channel, self.name, response)

    # -- claims gathering -------------------------------------------------------------

    def request_claims_authorization(self, channel: SecureChannel,
                                     attributes: tuple[str, ...],
                                     purpose: str) -> None:
        self.sim.send(channel, self.name,
                      msg.ClaimsAuthRequest(attributes, purpose))

    def fetch_claims(self, channel: SecureChannel) -> None:
        token = self.claims_token
        if token is None:
            raise claims_mod.BadToken("no authorization token held")
        terms = codec.canonical_encode(("claims-terms", token.token_id,
                                        token.purpose))
        signature = crypto.sign(self.claims_key.private_key, terms)
        self.sim.emit(self.name, "claims.terms_accepted",
                      detail=f"token={token.token_id.hex()[:16]} "
                             f"purpose={token.purpose}")
        self.sim.send(channel, self.name, msg.ClaimsFetchRequest(
            token, signature, self.certs.claims.serial))

    def _on_claims_auth_response(self, channel: SecureChannel, env: Envelope) -> None:
        body: msg.ClaimsAuthResponse = env.body
        if body.token is not None:
            self.claims_token = body.token
            self.sim.emit(self.name, "claims.token_received", payload=body.token,
                          detail=f"token={body.token.token_id.hex()[:16]} "
                                 f"attrs={list(body.token.permitted_attributes)}")
        else:
            self.claims_denial = body.denial_reason
            self.sim.emit(self.name, "claims.token_denied",
                          detail=f"reason={body.denial_reason}")

    def _on_claims_fetch_response(self, channel: SecureChannel, env: Envelope) -> None:
        body: msg.ClaimsFetchResponse = env.body
        if body.error:
            self.sim.emit(self.name, "claims.fetch_refused",
                          detail=f"reason={body.error}")
            return
        verified = 0
        for claim in body.claims:
            provider_key = self.directory.provider_keys.get(claim.issuer)
            verdict = claims_mod.verify_claim(claim, provider_key or b"",
                                              self.sim.now)
            if verdict is claims_mod.ClaimVerdict.VALID:
                verified += 1
        self.fetched_claims.extend(body.claims)
        if body.receipt is not None:
            self.consent_receipts.append(body.receipt)
        self.sim.emit(self.name, "claims.claims_fetched",
                      detail=f"claims={len(body.claims)} verified={verified} "
                             f"receipt={'yes' if body.receipt else 'no'}")

    # -- wallet supervision -------------------------------------------------------------

    def onboard(self, customer_id: str, device: wallet.WalletDevice,
                policy: wallet.OnboardPolicy | None = None) -> wallet.BoardingReport:
        nonce = self.sim.nonce()
        report, supervision = wallet.onboard_customer(
            self.vasp_number, customer_id, device, self.ledger, self.registry,
            nonce, self.sim.now, policy)
        if supervision is not None:
            self.supervision[customer_id] = supervision
            self.devices[device.device_id] = device
            self.sim.emit(self.name, "attest.evidence_produced",
                          payload=supervision.checkpoints[0],
                          detail=f"device={device.device_id} purpose=onboarding")
        transition = ""
        if report.key_transition is not None:
            transition = (f" old={list(report.key_transition.old_handles)} "
                          f"new={report.key_transition.new_handle}")
        self.sim.emit(self.name, "boarding.onboard",
                      detail=f"customer={customer_id} device={device.device_id} "
                             f"accepted={report.accepted}"
                             f"{transition}"
                             + (f" reason={report.reason}" if report.reason else ""))
        return report

    def offboard(self, customer_id: str,
                 device: wallet.WalletDevice) -> wallet.BoardingReport:
        supervision = self.supervision.get(customer_id)
        if supervision is None:
            raise wallet.NotSupervised(customer_id)
        nonce = self.sim.nonce()
        report = wallet.offboard_customer(
            self.vasp_number, customer_id, device, self.ledger, self.registry,
            supervision, nonce, self.sim.now)
        erased = [r.handle for r in report.erasure_evidence.key_reports
                  if r.erased] if report.erasure_evidence else []
        self.sim.emit(self.name, "boarding.offboard",
                      detail=f"customer={customer_id} device={device.device_id} "
                             f"accepted={report.accepted} erased_handles={erased}")
        del self.supervision[customer_id]
        return report

    def take_checkpoints(self, now: int) -> None:
        """Tick hook: attestation checkpoint for every supervised wallet."""
        for customer_id in sorted(self.supervision):
            supervision = self.supervision[customer_id]
            device = self.devices[supervision.device_id]
            evidence = wallet.take_checkpoint(supervision, device,
                                              self.sim.nonce(), now)
            self.sim.emit(self.name, "attest.checkpoint", payload=evidence,
                          detail=f"device={device.device_id} "
                                 f"count={len(supervision.checkpoints)}")

    def _on_attestation_challenge(self, channel: SecureChannel, env: Envelope) -> None:
        body: msg.AttestationChallenge = env.body
        device = self.devices.get(body.device_id)
        if device is None:
            self.sim.send(channel, self.name, msg.AttestationResponse(
                body.device_id, None, "unknown_device"))
            return
        try:
            evidence = device.attest(body.nonce, self.sim.now)
        except wallet.AttestationRefused:
            self.sim.send(channel, self.name, msg.AttestationResponse(
                body.device_id, None, "attestation_refused"))
            return
        self.sim.emit(self.name, "attest.evidence_produced", payload=evidence,
                      detail=f"device={body.device_id} purpose=audit")
        self.sim.send(channel, self.name,
                      msg.AttestationResponse(body.device_id, evidence, ""))

    # -- dispatch -----------------------------------------------------------------------

    def handle(self, channel: SecureChannel, env: Envelope) -> None:
        body = env.body
        if isinstance(body, msg.TravelRuleRequest):
            self._on_travel_rule_request(channel, env)
        elif isinstance(body, msg.TravelRuleResponse):
            self._on_travel_rule_response(channel, env)
        elif isinstance(body, msg.LookupRequest):
            self._on_lookup_request(channel, env)
        elif isinstance(body, msg.LookupResponse):
            self.remote_lookups.append(body)
        elif isinstance(body, msg.AdvertisementFlood):
            self._merge_advertisement(body.advertisement)
        elif isinstance(body, msg.ClaimsAuthResponse):
            self._on_claims_auth_response(channel, env)
        elif isinstance(body, msg.ClaimsFetchResponse):
            self._on_claims_fetch_response(channel, env)
        elif isinstance(body, msg.AttestationChallenge):
            self._on_attestation_challenge(channel, env)


class AuthServerNode(Node):
    """Authorization server for one customer's claims store."""

    def __init__(self, sim: Simulation, owner: str,
                 identity_cert: pki.EvIdentityCertificate,
                 identity_key: crypto.KeyPair,
                 server: claims_mod.AuthorizationServer,
                 directory: ConsortiumDirectory,
                 revocation_list_source):
        super().__init__(f"authsrv:{owner}", identity_cert, identity_key)
        self.sim = sim
        self.owner = owner
        self.server = server
        self.directory = directory
        self._revocation_list_source = revocation_list_source

    def handle(self, channel: SecureChannel, env: Envelope) -> None:
        if not isinstance(env.body, msg.ClaimsAuthRequest):
            return
        caller_cert = self.directory.certs.get(channel.peer_serial(env.sender))
        if not isinstance(caller_cert, pki.EvIdentityCertificate):
            self.sim.send(channel, self.name,
                          msg.ClaimsAuthResponse(None, "unknown_caller"))
            return
        result = self.server.request_authorization(
            caller_cert, set(env.body.attributes), env.body.purpose,
            self.sim.now, self.directory.root_public_key,
            self._revocation_list_source())
        if isinstance(result, claims_mod.Denial):
            self.sim.emit(self.name, "claims.token_denied",
                          detail=f"caller={env.sender} reason={result.reason.value}")
            self.sim.send(channel, self.name,
                          msg.ClaimsAuthResponse(None, result.reason.value))
        else:
            self.sim.emit(self.name, "claims.token_issued", payload=result,
                          detail=f"caller={env.sender} "
                                 f"token={result.token_id.hex()[:16]} "
                                 f"attrs={list(result.permitted_attributes)} "
                                 f"expires={result.expires_at}")
            self.sim.send(channel, self.name, msg.ClaimsAuthResponse(result, ""))


class ClaimsStoreNode(Node):
    """Network face of one customer's claims store."""

    def __init__(self, sim: Simulation, owner: str,
                 identity_cert: pki.EvIdentityCertificate,
                 identity_key: crypto.KeyPair,
                 store: claims_mod.ClaimsStore,
                 directory: ConsortiumDirectory):
        super().__init__(f"store:{owner}", identity_cert, identity_key)
        self.sim = sim
        self.owner = owner
        self.store = store
        self.directory = directory

    def handle(self, channel: SecureChannel, env: Envelope) -> None:
        if not isinstance(env.body, msg.ClaimsFetchRequest):
            return
        body: msg.ClaimsFetchRequest = env.body
        token = body.token
        signer_cert = self.directory.certs.get(body.vasp_claims_cert_serial)
        terms = codec.canonical_encode(("claims-terms", token.token_id,
                                        token.purpose))
        if (not isinstance(signer_cert, pki.SigningCertificate)
                or not crypto.verify(signer_cert.subject_public_key, terms,
                                     body.terms_signature)):
            self.sim.emit(self.name, "claims.fetch_refused",
                          detail="reason=terms_not_countersigned")
            self.sim.send(channel, self.name, msg.ClaimsFetchResponse(
                (), None, "terms_not_countersigned"))
            return
        try:
            released, receipt = self.store.fetch_claims(token, self.sim.now)
        except claims_mod.ClaimsError as exc:
            reason = type(exc).__name__
            self.sim.emit(self.name, "claims.fetch_refused",
                          detail=f"reason={reason}")
            self.sim.send(channel, self.name,
                          msg.ClaimsFetchResponse((), None, reason))
            return
        self.sim.emit(self.name, "claims.claims_released",
                      detail=f"vasp={token.audience_vasp_number} "
                             f"attrs={sorted({c.attribute_name for c in released})} "
                             f"count={len(released)}")
        self.sim.emit(self.name, "claims.receipt_issued", payload=receipt,
                      detail=f"receipt={receipt.receipt_id.hex()[:16]} "
                             f"token={receipt.token_id.hex()[:16]}")
        self.sim.send(channel, self.name, msg.ClaimsFetchResponse(
            tuple(released), receipt, ""))


class InsurerNode(Node):
    """Asset insurer: audits regulated wallets via attestation evidence."""

    def __init__(self, sim: Simulation, name: str,
                 identity_cert: pki.EvIdentityCertificate,
                 identity_key: crypto.KeyPair,
                 directory: ConsortiumDirectory,
                 approved_stacks: set[bytes]):
        super().__init__(f"insurer:{name}", identity_cert, identity_key)
        self.sim = sim
        self.directory = directory
        self.approved_stacks = approved_stacks
        self.pending_nonces: dict[str, bytes] = {}
        self.audit_verdicts: dict[str, wallet.VerifierVerdict] = {}

    def request_audit(self, channel: SecureChannel, device_id: str) -> None:
        nonce = self.sim.nonce()
        self.pending_nonces[device_id] = nonce
        self.sim.emit(self.name, "attest.audit_requested",
                      detail=f"device={device_id} via={channel.other(self.name)}")
        self.sim.send(channel, self.name,
                      msg.AttestationChallenge(device_id, nonce))

    def handle(self, channel: SecureChannel, env: Envelope) -> None:
        if not isinstance(env.body, msg.AttestationResponse):
            return
        body: msg.AttestationResponse = env.body
        nonce = self.pending_nonces.get(body.device_id)
        if body.evidence is None or nonce is None:
            self.sim.emit(self.name, "attest.audit_verdict",
                          detail=f"device={body.device_id} passed=False "
                                 f"reason={body.error or 'no_evidence'}")
            return
        device_key = self.directory.device_attestation_keys.get(body.device_id, b"")
        verdict = wallet.verify_evidence(body.evidence, nonce, device_key,
                                         self.approved_stacks)
        self.audit_verdicts[body.device_id] = verdict
        findings = "; ".join(verdict.key_findings) or "none"
        self.sim.emit(self.name, "attest.audit_verdict",
                      detail=f"device={body.device_id} passed={verdict.passed} "
                             f"signature_ok={verdict.signature_ok} "
                             f"nonce_fresh={verdict.nonce_fresh} "
                             f"stack_approved={verdict.stack_approved} "
                             f"findings=[{findings}]")
