"""Inter-VASP public key management and travel-rule compliance stack.

Modules:
  crypto      seeded Ed25519/SHA-256 primitives and the canonical TLV codec
  ca          certificate authority services (issuance, revocation, CRLs, status)
  assertions  VASP-signed attribute assertions with disclosure filtering
  vasp        the VASP node: accounts, custody models, transfer pipeline, audit
  network     trust networks: gossip directories, CRL exchange, path-vector routes
  chain       append-only hash-chained ledger simulator
  scenario    scenario file schema and loader
  harness     deterministic discrete-event simulation
  report      text and canonical run reports, replay verification
  cli         command-line verbs (run, validate, replay, dump-routes, dump-ledger)
"""

from .assertions import (
    AttributeAssertion,
    DisclosurePolicy,
    TRAVEL_RULE_ATTRIBUTES,
    TRAVEL_RULE_POLICY,
    filter_attributes,
    issue_assertion,
    verify_assertion,
)
from .ca import (
    Certificate,
    CertificateAuthority,
    CertificateProfile,
    CertClass,
    Crl,
    DeltaCrl,
    RevocationReason,
    RevocationView,
    ValidationResult,
    ValidationStatus,
    validate_certificate,
)
from .chain import ChainTransaction, SimChain, build_transaction
from .crypto import (
    KeyPair,
    canonical_decode,
    canonical_encode,
    digest,
    generate_keypair,
    sign,
    verify,
)
from .harness import EventLog, Metrics, RunResult, Simulation, run_scenario
from .network import (
    DirectoryDelta,
    DirectorySnapshot,
    OperatingRules,
    PeeringLink,
    ReachabilityAdvertisement,
    TrustNetwork,
)
from .scenario import Scenario, SchemaError, load_scenario
from .vasp import (
    Account,
    CustodyModel,
    TransferOutcome,
    TransferTarget,
    TravelRuleRecord,
    VaspNode,
)

__version__ = "0.1.0"
