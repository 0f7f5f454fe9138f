"""Topology configuration: consortium, VASPs, customers, federation graph.

Configs are JSON files with explicit keys. Parsing validates referential
integrity (unique VASP numbers, federation edges between configured VASPs,
parseable identifiers) and reports problems with their config path. All
randomness in a run flows from the single ``seed`` value here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .pki import BusinessActivity
from .resolver import Unparseable, parse_identifier

SERVICE_NUMBER_BASE = 1000  # entity numbers >= this are reserved for services


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class WalletSpec:
    initial_balance: int = 0
    imported_key_balance: int = 0


@dataclass
class ClaimSpec:
    provider: str
    attribute: str
    value: str


@dataclass
class CustomerConfig:
    id: str
    legal_name: str
    identifiers: list[str] = field(default_factory=list)
    geographic_address: str = ""
    national_id: str = ""
    customer_number: str = ""
    birth_date: str = ""
    birth_place: str = ""
    wallet: WalletSpec | None = None
    claims: list[ClaimSpec] = field(default_factory=list)


@dataclass
class VaspConfig:
    vasp_number: int
    organization_name: str
    alt_domain_names: list[str]
    incorporation_number_or_lei: str
    is_lei: bool
    place_of_business: str
    jurisdiction: str
    regulated_business_activity: str
    policy_object_identifier: str
    customers: list[CustomerConfig] = field(default_factory=list)
    treasury: int = 1_000_000


@dataclass
class IdpConfig:
    domain: str
    directory: list[str] = field(default_factory=list)


@dataclass
class TopologyConfig:
    consortium: str
    seed: int
    vasps: list[VaspConfig]
    idps: list[IdpConfig] = field(default_factory=list)
    claims_providers: list[str] = field(default_factory=list)
    insurer: str | None = None
    federation_graph: dict[int, list[int]] = field(default_factory=dict)
    scenario_params: dict[str, dict] = field(default_factory=dict)

    def vasp(self, number: int) -> VaspConfig:
        for v in self.vasps:
            if v.vasp_number == number:
                return v
        raise KeyError(number)

    def neighbors(self, number: int) -> list[int]:
        return sorted(self.federation_graph.get(number, []))


def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return data[key]


def _parse_customer(data: dict, path: str) -> CustomerConfig:
    wallet = None
    if data.get("wallet"):
        w = data["wallet"]
        wallet = WalletSpec(
            initial_balance=int(w.get("initial_balance", 0)),
            imported_key_balance=int(w.get("imported_key_balance", 0)))
    claim_specs = []
    for i, c in enumerate(data.get("claims", [])):
        claim_specs.append(ClaimSpec(
            provider=_require(c, "provider", f"{path}.claims[{i}]"),
            attribute=_require(c, "attribute", f"{path}.claims[{i}]"),
            value=_require(c, "value", f"{path}.claims[{i}]")))
    customer = CustomerConfig(
        id=_require(data, "id", path),
        legal_name=_require(data, "legal_name", path),
        identifiers=list(data.get("identifiers", [])),
        geographic_address=data.get("geographic_address", ""),
        national_id=data.get("national_id", ""),
        customer_number=data.get("customer_number", ""),
        birth_date=data.get("birth_date", ""),
        birth_place=data.get("birth_place", ""),
        wallet=wallet,
        claims=claim_specs)
    for i, ident in enumerate(customer.identifiers):
        try:
            parse_identifier(ident)
        except Unparseable as exc:
            raise ConfigError(f"{path}.identifiers[{i}]", str(exc)) from None
    return customer


def parse_config(data: dict, source: str = "config") -> TopologyConfig:
    if "seed" not in data:
        raise ConfigError(f"{source}.seed", "missing required field: seed")
    try:
        seed = int(data["seed"])
    except (TypeError, ValueError):
        raise ConfigError(f"{source}.seed", "seed must be an integer") from None

    vasps = []
    numbers: set[int] = set()
    for i, v in enumerate(data.get("vasps", [])):
        path = f"{source}.vasps[{i}]"
        number = int(_require(v, "vasp_number", path))
        if number in numbers:
            raise ConfigError(f"{path}.vasp_number", f"duplicate value {number}")
        if number >= SERVICE_NUMBER_BASE:
            raise ConfigError(f"{path}.vasp_number",
                              f"values >= {SERVICE_NUMBER_BASE} are reserved")
        numbers.add(number)
        activity = v.get("regulated_business_activity", "Exchange")
        if activity not in {a.value for a in BusinessActivity}:
            raise ConfigError(f"{path}.regulated_business_activity",
                              f"unknown activity {activity!r}")
        customers = []
        customer_ids = set()
        for j, c in enumerate(v.get("customers", [])):
            customer = _parse_customer(c, f"{path}.customers[{j}]")
            if customer.id in customer_ids:
                raise ConfigError(f"{path}.customers[{j}].id",
                                  f"duplicate customer id {customer.id!r}")
            customer_ids.add(customer.id)
            customers.append(customer)
        vasps.append(VaspConfig(
            vasp_number=number,
            organization_name=_require(v, "organization_name", path),
            alt_domain_names=list(_require(v, "alt_domain_names", path)),
            incorporation_number_or_lei=v.get("incorporation_number_or_lei", ""),
            is_lei=bool(v.get("is_lei", False)),
            place_of_business=v.get("place_of_business", ""),
            jurisdiction=v.get("jurisdiction", ""),
            regulated_business_activity=activity,
            policy_object_identifier=v.get("policy_object_identifier", "1.3.6.1.4.1.0"),
            customers=customers,
            treasury=int(v.get("treasury", 1_000_000))))
    if not vasps:
        raise ConfigError(f"{source}.vasps", "at least one VASP is required")

    graph: dict[int, list[int]] = {}
    for key, neighbors in data.get("federation_graph", {}).items():
        a = int(key)
        if a not in numbers:
            raise ConfigError(f"{source}.federation_graph.{key}",
                              "unknown vasp_number")
        for b in neighbors:
            b = int(b)
            if b not in numbers:
                raise ConfigError(f"{source}.federation_graph.{key}",
                                  f"unknown neighbor {b}")
            if b == a:
                continue
            graph.setdefault(a, [])
            graph.setdefault(b, [])
            if b not in graph[a]:
                graph[a].append(b)
            if a not in graph[b]:
                graph[b].append(a)

    idps = []
    for i, d in enumerate(data.get("idps", [])):
        idps.append(IdpConfig(
            domain=_require(d, "domain", f"{source}.idps[{i}]"),
            directory=list(d.get("directory", []))))

    return TopologyConfig(
        consortium=data.get("consortium", "vasp-consortium"),
        seed=seed,
        vasps=vasps,
        idps=idps,
        claims_providers=list(data.get("claims_providers", [])),
        insurer=data.get("insurer"),
        federation_graph=graph,
        scenario_params={k: dict(v) for k, v in
                         data.get("scenario_params", {}).items()})


def load_config(path: str | Path) -> TopologyConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}", f"invalid JSON: {exc.msg}") from None
    return parse_config(data, source=str(path))


def config_to_dict(config: TopologyConfig) -> dict:
    def wallet_dict(w: WalletSpec | None):
        if w is None:
            return None
        return {"initial_balance": w.initial_balance,
                "imported_key_balance": w.imported_key_balance}

    return {
        "consortium": config.consortium,
        "seed": config.seed,
        "vasps": [
            {
                "vasp_number": v.vasp_number,
                "organization_name": v.organization_name,
                "alt_domain_names": v.alt_domain_names,
                "incorporation_number_or_lei": v.incorporation_number_or_lei,
                "is_lei": v.is_lei,
                "place_of_business": v.place_of_business,
                "jurisdiction": v.jurisdiction,
                "regulated_business_activity": v.regulated_business_activity,
                "policy_object_identifier": v.policy_object_identifier,
                "treasury": v.treasury,
                "customers": [
                    {
                        "id": c.id,
                        "legal_name": c.legal_name,
                        "identifiers": c.identifiers,
                        "geographic_address": c.geographic_address,
                        "national_id": c.national_id,
                        "customer_number": c.customer_number,
                        "birth_date": c.birth_date,
                        "birth_place": c.birth_place,
                        "wallet": wallet_dict(c.wallet),
                        "claims": [
                            {"provider": s.provider, "attribute": s.attribute,
                             "value": s.value} for s in c.claims
                        ],
                    } for c in v.customers
                ],
            } for v in config.vasps
        ],
        "idps": [{"domain": d.domain, "directory": d.directory}
                 for d in config.idps],
        "claims_providers": config.claims_providers,
        "insurer": config.insurer,
        "federation_graph": {str(k): sorted(v)
                             for k, v in sorted(config.federation_graph.items())},
        "scenario_params": config.scenario_params,
    }


def default_config() -> dict:
    """Three-VASP demo topology exercising every scenario."""
    carol_bare_key = hashlib.sha256(b"carol-self-custody-key").hexdigest()
    return {
        "consortium": "Open VASP TestNet Consortium",
        "seed": 42,
        "vasps": [
            {
                "vasp_number": 7,
                "organization_name": "ACME Digital Assets Ltd",
                "alt_domain_names": ["acmepay.com"],
                "incorporation_number_or_lei": "5493001KJTIIGC8Y1R12",
                "is_lei": True,
                "place_of_business": "22 Kendall Sq, Cambridge MA, USA",
                "jurisdiction": "Delaware Division of Corporations",
                "regulated_business_activity": "Exchange",
                "policy_object_identifier": "1.3.6.1.4.1.99999.7",
                "customers": [
                    {
                        "id": "alice",
                        "legal_name": "Alice Example",
                        "identifiers": ["alice@idp1.com", "alice$acmepay.com"],
                        "geographic_address": "10 Beacon St, Boston MA, USA",
                        "wallet": {"initial_balance": 500},
                        "claims": [
                            {"provider": "dmv", "attribute": "driving_license_number",
                             "value": "DL-555-0101"}
                        ],
                    },
                    {
                        "id": "carol",
                        "legal_name": "Carol Nakamura",
                        "identifiers": ["carol$acmepay.com", carol_bare_key],
                        "customer_number": "C-7788",
                    },
                ],
            },
            {
                "vasp_number": 9,
                "organization_name": "Beta Exchange GmbH",
                "alt_domain_names": ["betaex.com", "betaex.de"],
                "incorporation_number_or_lei": "HRB-204881-B",
                "is_lei": False,
                "place_of_business": "Friedrichstrasse 68, Berlin, DE",
                "jurisdiction": "Amtsgericht Charlottenburg",
                "regulated_business_activity": "Transfer",
                "policy_object_identifier": "1.3.6.1.4.1.99999.9",
                "customers": [
                    {
                        "id": "bob",
                        "legal_name": "Bob Jones",
                        "identifiers": ["bob@idp2.com", "bob$betaex.com"],
                        "national_id": "DE-ID-99887766",
                    },
                    {
                        "id": "dave",
                        "legal_name": "Dave Osei",
                        "identifiers": ["dave@idp2.com"],
                        "geographic_address": "5 Unter den Linden, Berlin, DE",
                    },
                ],
            },
            {
                "vasp_number": 3,
                "organization_name": "Gamma Custody Oy",
                "alt_domain_names": ["gammax.fi"],
                "incorporation_number_or_lei": "3120011FI556677",
                "is_lei": False,
                "place_of_business": "Mannerheimintie 12, Helsinki, FI",
                "jurisdiction": "Finnish Patent and Registration Office",
                "regulated_business_activity": "Custody",
                "policy_object_identifier": "1.3.6.1.4.1.99999.3",
                "customers": [
                    {
                        "id": "dave",
                        "legal_name": "Dave Osei",
                        "identifiers": ["dave@idp2.com"],
                        "customer_number": "GC-4411",
                    },
                ],
            },
        ],
        "idps": [
            {"domain": "idp1.com", "directory": ["alice@idp1.com"]},
            {"domain": "idp2.com", "directory": ["bob@idp2.com", "dave@idp2.com"]},
        ],
        "claims_providers": ["dmv"],
        "insurer": "crestline-insurance",
        "federation_graph": {"7": [9], "9": [3]},
        "scenario_params": {
            "S1": {
                "originator_customer": "alice",
                "originator_vasp": 7,
                "beneficiary_identifier": "bob@idp2.com",
                "beneficiary_name": "Bob Jones",
                "amount": 125,
                "grant_originator_consent": True,
                "grant_beneficiary_consent": True,
            },
            "S2": {
                "owner_customer": "alice",
                "requesting_vasp": 7,
                "attributes": ["driving_license_number"],
                "purpose": "travel-rule-customer-verification",
                "withdraw_before_fetch": False,
            },
            "S4": {
                "customer": "alice",
                "vasp": 7,
                "insurer_audit": True,
                "supervision_steps": 25,
            },
            "S5": {
                "originator_customer": "alice",
                "originator_vasp": 7,
                "beneficiary_identifier": "dave@idp2.com",
                "beneficiary_name": "Dave Osei",
                "amount": 50,
            },
        },
    }
