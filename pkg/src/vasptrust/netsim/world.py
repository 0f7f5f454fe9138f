"""Build a ready-to-run simulated world from a topology configuration.

Creates the consortium root, issues identity plus transaction- and
claims-signing certificates for every VASP, identity certificates for the
remote service actors (authorization servers, claims stores, insurer),
provisions customer wallet devices, funds the ledger genesis, registers
identifiers (validated against the issuing IdP's directory where one is
configured), and wires claims providers and stores. Everything derives from
the single config seed, so two builds of the same config are identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import claims as claims_mod
from .. import crypto, pki, wallet
from ..config import TopologyConfig, VaspConfig
from ..ledger import Ledger
from ..resolver import IdpDirectory, parse_identifier
from ..travel_rule import CustomerRecord
from .nodes import (AuthServerNode, ClaimsStoreNode, ConsortiumDirectory,
                    InsurerNode, VaspCerts, VaspNode)
from .sim import ActorKind, FaultConfig, SecureChannel, Simulation

CERT_VALIDITY = 1_000_000
DEFAULT_STACK_COMPONENTS = ("bootloader", "wallet-os", "signer-app")
CHECKPOINT_INTERVAL = 10  # attestation checkpoint every N ticks


@dataclass
class World:
    config: TopologyConfig
    sim: Simulation
    root: pki.RootAuthority
    ledger: Ledger
    registry: wallet.WalletRegistry
    directory: ConsortiumDirectory
    vasps: dict[int, VaspNode]
    idp_directories: dict[str, IdpDirectory]
    providers: dict[str, claims_mod.ClaimsProvider]
    stores: dict[str, ClaimsStoreNode]
    auth_servers: dict[str, AuthServerNode]
    insurer: InsurerNode | None
    devices: dict[str, wallet.WalletDevice]
    approved_stacks: set[bytes]
    customer_keys: list[bytes] = field(default_factory=list)
    _channels: dict[frozenset, SecureChannel] = field(default_factory=dict)

    def vasp(self, number: int) -> VaspNode:
        return self.vasps[number]

    def channel_between(self, a, b) -> SecureChannel:
        """Establish (once) and return the channel between two nodes."""
        key = frozenset((a.name, b.name))
        if key not in self._channels:
            self._channels[key] = self.sim.establish_channel(
                a, b, self.root.public_key, self.root.revocation_list)
        return self._channels[key]

    def federation_channels(self) -> dict[int, list[SecureChannel]]:
        """Channels along every federation edge, keyed by VASP number."""
        out: dict[int, list[SecureChannel]] = {n: [] for n in sorted(self.vasps)}
        for a in sorted(self.config.federation_graph):
            for b in self.config.neighbors(a):
                if a < b:
                    channel = self.channel_between(self.vasps[a], self.vasps[b])
                    out[a].append(channel)
                    out[b].append(channel)
        return out

    def confirm_block(self):
        block = self.ledger.confirm_block()
        self.sim.emit("ledger", "ledger.block_confirmed",
                      detail=f"height={block.height} txs={len(block.tx_ids)} "
                             f"hash={block.block_hash.hex()[:16]}")
        return block

    def assert_that(self, name: str, passed: bool, note: str = "") -> bool:
        return self.sim.assert_that(name, passed, note)


def _default_stack(master: bytes) -> list[tuple[str, bytes]]:
    return [(name, crypto.digest(crypto.derive_seed(master, f"stack:{name}")))
            for name in DEFAULT_STACK_COMPONENTS]


def _service_subject(name: str, number: int, consortium: str) -> pki.EvSubjectInfo:
    return pki.EvSubjectInfo(
        organization_name=name,
        alt_domain_names=(f"{name.partition(':')[2] or name}.svc".lower(),),
        incorporation_number_or_lei=f"SVC-{number}",
        is_lei=False,
        place_of_business=consortium,
        jurisdiction=consortium,
        vasp_number=number,
        regulated_business_activity=pki.BusinessActivity.FINANCIAL_SERVICES,
        policy_object_identifier="1.3.6.1.4.1.99999.1000",
    )


def _vasp_subject(cfg: VaspConfig) -> pki.EvSubjectInfo:
    return pki.EvSubjectInfo(
        organization_name=cfg.organization_name,
        alt_domain_names=tuple(cfg.alt_domain_names),
        incorporation_number_or_lei=cfg.incorporation_number_or_lei,
        is_lei=cfg.is_lei,
        place_of_business=cfg.place_of_business,
        jurisdiction=cfg.jurisdiction,
        vasp_number=cfg.vasp_number,
        regulated_business_activity=pki.BusinessActivity(
            cfg.regulated_business_activity),
        policy_object_identifier=cfg.policy_object_identifier,
    )


def build_world(config: TopologyConfig, scenario: str = "adhoc",
                faults: FaultConfig | None = None) -> World:
    master = crypto.seed_from_int(config.seed)
    sim = Simulation(config.seed, scenario=scenario, faults=faults)

    root = pki.create_consortium_root(config.consortium,
                                      crypto.derive_seed(master, "root"))
    directory = ConsortiumDirectory(root.public_key)
    registry = wallet.WalletRegistry()
    sim.register_actor("sim", ActorKind.LEDGER_NODE)
    sim.register_actor("ledger", ActorKind.LEDGER_NODE)
    sim.emit("sim", "pki.root_created",
             detail=f"consortium={config.consortium!r} "
                    f"root_key={root.public_key.hex()[:16]}")

    # Wallet devices and genesis funding are prepared before the ledger
    # exists; balances are fixed at genesis and conserved afterwards.
    approved_stacks: set[bytes] = set()
    devices: dict[str, wallet.WalletDevice] = {}
    device_owner: dict[str, tuple[int, str]] = {}
    genesis: list[tuple[bytes, int]] = []
    customer_keys: list[bytes] = []
    stack = _default_stack(master)
    for vcfg in config.vasps:
        for ccfg in vcfg.customers:
            if ccfg.wallet is None:
                continue
            device_id = f"wdev:{ccfg.id}@{vcfg.vasp_number}"
            device = wallet.WalletDevice(
                device_id,
                crypto.derive_seed(master, f"device:{device_id}"),
                stack)
            approved_stacks.add(device.boot_digest)
            handle = device.generate_key(migratable=False)
            key = device.slot(handle).public_key
            customer_keys.append(key)
            if ccfg.wallet.initial_balance > 0:
                genesis.append((key, ccfg.wallet.initial_balance))
            if ccfg.wallet.imported_key_balance > 0:
                imported = crypto.generate_keypair(
                    crypto.derive_seed(master, f"imported:{device_id}"))
                ih = device.import_key(imported)
                customer_keys.append(device.slot(ih).public_key)
                genesis.append((imported.public_key,
                                ccfg.wallet.imported_key_balance))
            devices[device_id] = device
            device_owner[device_id] = (vcfg.vasp_number, ccfg.id)
            directory.device_attestation_keys[device_id] = \
                device.attestation_public_key
            registry.set_private(device_id, 0)

    vasp_keys: dict[int, tuple[crypto.KeyPair, crypto.KeyPair, crypto.KeyPair]] = {}
    for vcfg in config.vasps:
        n = vcfg.vasp_number
        identity = crypto.generate_keypair(crypto.derive_seed(master, f"vasp:{n}:identity"))
        tx = crypto.generate_keypair(crypto.derive_seed(master, f"vasp:{n}:transaction"))
        claims_key = crypto.generate_keypair(crypto.derive_seed(master, f"vasp:{n}:claims"))
        vasp_keys[n] = (identity, tx, claims_key)
        genesis.append((tx.public_key, vcfg.treasury))
    ledger = Ledger(genesis)

    # Certificates: identity + the two signing certificates per VASP.
    for vcfg in config.vasps:
        n = vcfg.vasp_number
        identity, tx, claims_key = vasp_keys[n]
        identity_cert = root.issue_identity_cert(
            _vasp_subject(vcfg), identity.public_key, 0, CERT_VALIDITY)
        tx_cert = root.issue_signing_cert(
            identity_cert, pki.CertPurpose.TRANSACTION_SIGNING,
            tx.public_key, 0, CERT_VALIDITY)
        claims_cert = root.issue_signing_cert(
            identity_cert, pki.CertPurpose.CLAIMS_SIGNING,
            claims_key.public_key, 0, CERT_VALIDITY)
        directory.add_member(VaspCerts(identity_cert, tx_cert, claims_cert))
        sim.emit("sim", "pki.cert_issued",
                 detail=f"kind=identity serial={identity_cert.serial} "
                        f"vasp={n} org={vcfg.organization_name!r}")
        sim.emit("sim", "pki.cert_issued",
                 detail=f"kind=signing purpose=TransactionSigning "
                        f"serial={tx_cert.serial} vasp={n}")
        sim.emit("sim", "pki.cert_issued",
                 detail=f"kind=signing purpose=ClaimsSigning "
                        f"serial={claims_cert.serial} vasp={n}")

    idp_directories: dict[str, IdpDirectory] = {}
    for idp in config.idps:
        directory_obj = IdpDirectory(idp.domain, set())
        for identifier in idp.directory:
            directory_obj.add(identifier)
        idp_directories[idp.domain.lower()] = directory_obj
        sim.register_actor(f"idp:{idp.domain.lower()}", ActorKind.IDENTITY_PROVIDER)

    revocation_source = lambda: root.revocation_list  # noqa: E731

    vasps: dict[int, VaspNode] = {}
    for vcfg in config.vasps:
        n = vcfg.vasp_number
        identity, tx, claims_key = vasp_keys[n]
        node = VaspNode(sim, n, directory.member(n), identity, tx, claims_key,
                        ledger, directory, revocation_source, registry,
                        approved_stacks)
        sim.register_actor(node.name, ActorKind.VASP, node.handle)
        vasps[n] = node
        for ccfg in vcfg.customers:
            record = CustomerRecord(
                customer_id=ccfg.id,
                legal_name=ccfg.legal_name,
                geographic_address=ccfg.geographic_address or None,
                national_id=ccfg.national_id or None,
                customer_number=ccfg.customer_number or None,
                birth_info=((ccfg.birth_date, ccfg.birth_place)
                            if ccfg.birth_date and ccfg.birth_place else None),
            )
            identifiers = [parse_identifier(s) for s in ccfg.identifiers]
            node.add_customer(record, identifiers, idp_directories)
            device_id = f"wdev:{ccfg.id}@{n}"
            if device_id in devices:
                node.attach_device(ccfg.id, devices[device_id])
        sim.emit(node.name, "netsim.actor_ready",
                 detail=f"customers={len(vcfg.customers)} "
                        f"treasury={vcfg.treasury}")

    # Claims infrastructure: providers, then a personal store plus
    # authorization server for every customer holding claims.
    providers: dict[str, claims_mod.ClaimsProvider] = {}
    for name in config.claims_providers:
        provider = claims_mod.ClaimsProvider(
            name, crypto.derive_seed(master, f"provider:{name}"))
        providers[name] = provider
        directory.provider_keys[name] = provider.public_key
        sim.register_actor(f"cp:{name}", ActorKind.CLAIMS_PROVIDER)

    service_number = 1000
    stores: dict[str, ClaimsStoreNode] = {}
    auth_servers: dict[str, AuthServerNode] = {}
    for vcfg in config.vasps:
        for ccfg in vcfg.customers:
            if not ccfg.claims:
                continue
            owner = ccfg.id
            server = claims_mod.AuthorizationServer(
                crypto.derive_seed(master, f"authsrv-sign:{owner}"))
            store = claims_mod.ClaimsStore(
                owner, crypto.derive_seed(master, f"store:{owner}"),
                authorization_server_key=server.public_key)
            server.bind_store(store)

            store_identity = crypto.generate_keypair(
                crypto.derive_seed(master, f"store-id:{owner}"))
            store_cert = root.issue_identity_cert(
                _service_subject(f"store:{owner}", service_number, config.consortium),
                store_identity.public_key, 0, CERT_VALIDITY)
            directory.add_service_identity(store_cert)
            service_number += 1
            srv_identity = crypto.generate_keypair(
                crypto.derive_seed(master, f"authsrv-id:{owner}"))
            srv_cert = root.issue_identity_cert(
                _service_subject(f"authsrv:{owner}", service_number, config.consortium),
                srv_identity.public_key, 0, CERT_VALIDITY)
            directory.add_service_identity(srv_cert)
            service_number += 1

            store_node = ClaimsStoreNode(sim, owner, store_cert, store_identity,
                                         store, directory)
            server_node = AuthServerNode(sim, owner, srv_cert, srv_identity,
                                         server, directory, revocation_source)
            sim.register_actor(store_node.name, ActorKind.CLAIMS_STORE,
                               store_node.handle)
            sim.register_actor(server_node.name, ActorKind.AUTHORIZATION_SERVER,
                               server_node.handle)
            stores[owner] = store_node
            auth_servers[owner] = server_node
            sim.register_actor(f"customer:{owner}", ActorKind.CUSTOMER)

            for spec in ccfg.claims:
                claim = providers[spec.provider].issue_claim(
                    owner, spec.attribute, spec.value, 0, CERT_VALIDITY)
                store.add_claim(claim)
                sim.emit(f"cp:{spec.provider}", "claims.claim_issued",
                         payload=claim,
                         detail=f"subject={owner} attribute={spec.attribute}")

    insurer = None
    if config.insurer:
        insurer_key = crypto.generate_keypair(
            crypto.derive_seed(master, f"insurer:{config.insurer}"))
        insurer_cert = root.issue_identity_cert(
            _service_subject(f"insurer:{config.insurer}", service_number,
                             config.consortium),
            insurer_key.public_key, 0, CERT_VALIDITY)
        directory.add_service_identity(insurer_cert)
        service_number += 1
        insurer = InsurerNode(sim, config.insurer, insurer_cert, insurer_key,
                              directory, approved_stacks)
        sim.register_actor(insurer.name, ActorKind.INSURER, insurer.handle)

    world = World(
        config=config, sim=sim, root=root, ledger=ledger, registry=registry,
        directory=directory, vasps=vasps, idp_directories=idp_directories,
        providers=providers, stores=stores, auth_servers=auth_servers,
        insurer=insurer, devices=devices, approved_stacks=approved_stacks,
        customer_keys=customer_keys)

    def checkpoint_hook(now: int) -> None:
        if now % CHECKPOINT_INTERVAL == 0:
            for number in sorted(vasps):
                if vasps[number].supervision:
                    vasps[number].take_checkpoints(now)

    sim.add_tick_hook(checkpoint_hook)
    return world
