"""Deterministic discrete-event harness wiring CAs, VASPs, trust networks,
peering links, the chain, and scripted actors.

Time is integer ticks. Per tick, processing order is fixed: scripted actions,
then due message deliveries (ascending destination actor id, then send
sequence), then periodic protocol duties (directory gossip, CRL exchange,
reachability advertisements), then ack-timeout sweeps, then the chain tick
with confirmation fan-out. One message hop costs a latency drawn from a
seeded per-link PRNG in [1, max_latency]; links can drop probabilistically
or be forced down for a scripted period.

Actor key material derives from (seed, actor name) so construction order
never affects any byte of the run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Optional

from . import crypto
from .assertions import DisclosurePolicy
from .ca import CertificateAuthority, CertClass, Certificate, RevocationReason
from .chain import ChainTransaction, SimChain, SubmitResult, build_transaction
from .crypto import KeyPair, canonical_encode, digest, enc_str, enc_u64, encode_str_map
from .network import OperatingRules, PeeringLink, TrustNetwork
from .scenario import Scenario, ScriptAction
from .vasp import CustodyModel, TransferOutcome, TransferTarget, VaspNode

ROOT_VALIDITY = 1_000_000
VASP_CERT_VALIDITY = 500_000
CUSTOMER_CERT_VALIDITY = 100_000


@dataclass(frozen=True)
class EventRecord:
    tick: int
    actor: str
    event: str
    details: tuple[tuple[str, str], ...]

    def to_bytes(self) -> bytes:
        return canonical_encode([
            (1, enc_u64(self.tick)),
            (2, enc_str(self.actor)),
            (3, enc_str(self.event)),
            (4, encode_str_map(dict(self.details))),
        ])

    def line(self) -> str:
        detail = " ".join(f"{k}={v}" for k, v in self.details)
        return f"[{self.tick:>5}] {self.actor} {self.event} {detail}".rstrip()


class EventLog:
    """Ordered event records plus a running digest over their canonical bytes."""

    def __init__(self) -> None:
        self.entries: list[EventRecord] = []
        self.running_digest = bytes(crypto.HASH_LEN)

    def append(self, tick: int, actor: str, event: str, **details: Any) -> EventRecord:
        normalized = tuple(sorted((k, str(v)) for k, v in details.items()))
        record = EventRecord(tick=tick, actor=actor, event=event, details=normalized)
        self.entries.append(record)
        self.running_digest = digest(self.running_digest + record.to_bytes())
        return record

    def __len__(self) -> int:
        return len(self.entries)

    def select(self, event: str) -> list[EventRecord]:
        return [e for e in self.entries if e.event == event]


@dataclass
class Metrics:
    transfers_attempted: int = 0
    transfers_confirmed: int = 0
    transfers_denied: dict[str, int] = field(default_factory=dict)
    resolution_attempts: int = 0
    resolution_successes: int = 0
    resolution_hops_total: int = 0
    advertisements_accepted: int = 0
    advertisements_dropped: int = 0
    messages_sent: int = 0
    messages_dropped: int = 0
    ledger_transactions: int = 0
    audit_violations: int = 0
    reconciliation_orphans: int = 0
    unconfirmed_records: int = 0
    directory_convergence_tick: int = 0
    final_tick: int = 0

    @property
    def denied_total(self) -> int:
        return sum(self.transfers_denied.values())

    @property
    def in_flight(self) -> int:
        return self.transfers_attempted - self.transfers_confirmed - self.denied_total

    @property
    def resolution_success_rate(self) -> float:
        if self.resolution_attempts == 0:
            return 0.0
        return self.resolution_successes / self.resolution_attempts

    @property
    def mean_resolution_hops(self) -> float:
        if self.resolution_successes == 0:
            return 0.0
        return self.resolution_hops_total / self.resolution_successes

    def as_pairs(self) -> list[tuple[str, str]]:
        pairs = [
            ("transfers_attempted", str(self.transfers_attempted)),
            ("transfers_confirmed", str(self.transfers_confirmed)),
            ("transfers_denied_total", str(self.denied_total)),
            ("transfers_in_flight", str(self.in_flight)),
            ("resolution_success_rate", f"{self.resolution_success_rate:.4f}"),
            ("mean_resolution_hops", f"{self.mean_resolution_hops:.4f}"),
            ("advertisements_accepted", str(self.advertisements_accepted)),
            ("advertisements_dropped", str(self.advertisements_dropped)),
            ("messages_sent", str(self.messages_sent)),
            ("messages_dropped", str(self.messages_dropped)),
            ("ledger_transactions", str(self.ledger_transactions)),
            ("audit_violations", str(self.audit_violations)),
            ("reconciliation_orphans", str(self.reconciliation_orphans)),
            ("unconfirmed_records", str(self.unconfirmed_records)),
            ("directory_convergence_tick", str(self.directory_convergence_tick)),
            ("final_tick", str(self.final_tick)),
        ]
        pairs += [
            (f"denied.{reason}", str(count))
            for reason, count in sorted(self.transfers_denied.items())
        ]
        return pairs


@dataclass
class _Message:
    seq: int
    src: str
    dst: str
    kind: str
    payload: Any
    send_tick: int
    deliver_tick: int


class _Link:
    def __init__(self, rng: random.Random, max_latency: int, drop_probability: float) -> None:
        self.rng = rng
        self.max_latency = max_latency
        self.drop_probability = drop_probability
        self.down_until = 0

    def up(self, now: int) -> bool:
        return now >= self.down_until

    def draw_latency(self) -> int:
        return self.rng.randint(1, self.max_latency)

    def draw_drop(self) -> bool:
        if self.drop_probability <= 0.0:
            return False
        return self.rng.random() < self.drop_probability


@dataclass
class ScriptedTransfer:
    action: ScriptAction
    outcome: TransferOutcome
    origin_vasp: str


class Simulation:
    """Build the world from a scenario and run it tick by tick.

    The instance doubles as the environment interface handed to every actor:
    ``now``, ``send``, ``node``, ``link_ok``, ``log``, ``submit_tx``, ``chain``.
    """

    def __init__(self, scenario: Scenario, seed: Optional[int] = None) -> None:
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.now = 0
        self.log_ = EventLog()
        self.metrics = Metrics()
        self.breaches: list[str] = []
        self.chain = SimChain(scenario.chain_id, scenario.confirmation_delay)
        self._queue: dict[int, list[_Message]] = {}
        self._seq = 0
        self._links: dict[tuple[str, str], _Link] = {}
        self._ca_crl_cache: dict[tuple[str, int], Any] = {}
        self._wallets: dict[str, KeyPair] = {}
        self.scripted_transfers: list[ScriptedTransfer] = []
        self._last_view_change = 0
        self._last_publish = 0
        self._next_tick = 0
        self._script_cursor = 0

        self.cas: dict[str, CertificateAuthority] = {}
        self.networks: dict[str, TrustNetwork] = {}
        self.vasps: dict[str, VaspNode] = {}
        self._customer_home: dict[str, str] = {}
        self._customer_model: dict[str, CustodyModel] = {}
        self._customer_class: dict[str, CertClass] = {}
        self._build()

    # -- environment interface ------------------------------------------------

    def log(self, actor: str, event: str, **details: Any) -> None:
        record = self.log_.append(self.now, actor, event, **details)
        self._tally(record)

    def node(self, vasp_id: str) -> Optional[VaspNode]:
        return self.vasps.get(vasp_id)

    def link_ok(self, a: str, b: str) -> bool:
        return self._link(a, b).up(self.now)

    def send(self, src: str, dst: str, kind: str, payload: Any) -> None:
        link = self._link(src, dst)
        self._seq += 1
        self.metrics.messages_sent += 1
        if not link.up(self.now):
            self.metrics.messages_dropped += 1
            self.log(src, "message_dropped", to=dst, kind=kind, reason="link-down")
            return
        if link.draw_drop():
            self.metrics.messages_dropped += 1
            self.log(src, "message_dropped", to=dst, kind=kind, reason="loss")
            return
        deliver = self.now + link.draw_latency()
        message = _Message(self._seq, src, dst, kind, payload, self.now, deliver)
        self._queue.setdefault(deliver, []).append(message)

    def submit_tx(self, actor: str, tx: ChainTransaction) -> SubmitResult:
        result = self.chain.submit_transaction(tx, self.now)
        if result.accepted:
            self.metrics.ledger_transactions += 1
            self.log(actor, "tx_submitted", tx=tx.tx_id.hex(),
                     binding=tx.tx_id.hex(), amount=tx.amount, asset=tx.asset_type)
        else:
            self.log(actor, "tx_rejected", reason=result.reason or "")
        return result

    def _link(self, a: str, b: str) -> _Link:
        key = (a, b) if a <= b else (b, a)
        link = self._links.get(key)
        if link is None:
            rng = random.Random(
                int.from_bytes(digest(f"link:{self.seed}:{key[0]}:{key[1]}".encode()), "big")
            )
            link = _Link(rng, self.scenario.max_latency, self.scenario.drop_probability)
            self._links[key] = link
        return link

    def _tally(self, record: EventRecord) -> None:
        details = dict(record.details)
        event = record.event
        if event == "transfer_initiated":
            self.metrics.transfers_attempted += 1
        elif event == "transfer_denied":
            reason = details.get("reason", "?")
            self.metrics.transfers_denied[reason] = (
                self.metrics.transfers_denied.get(reason, 0) + 1
            )
        elif event == "record_confirmed" and details.get("role") == "originator":
            self.metrics.transfers_confirmed += 1
        elif event == "resolve":
            self.metrics.resolution_attempts += 1
            if details.get("outcome") == "resolved":
                self.metrics.resolution_successes += 1
                self.metrics.resolution_hops_total += int(details.get("hops", 0))
        elif event == "advertisement":
            if details.get("verdict") == "accept":
                self.metrics.advertisements_accepted += 1
            else:
                self.metrics.advertisements_dropped += 1
        elif event in ("directory_applied", "directory_published"):
            self._last_view_change = record.tick
            if event == "directory_published":
                self._last_publish = record.tick

    # -- world construction -----------------------------------------------------

    def _build(self) -> None:
        scenario = self.scenario
        for spec in sorted(scenario.cas, key=lambda c: c.ca_id):
            keypair = crypto.keypair_from_label(f"ca:{self.seed}", spec.ca_id)
            rng = self._derived_rng("ca-rng", spec.ca_id)
            ca = CertificateAuthority(spec.ca_id, keypair, rng)
            ca.self_sign_root(0, ROOT_VALIDITY)
            self.cas[spec.ca_id] = ca

        anchors: dict[str, Certificate] = {
            ca_id: ca.root_certificate
            for ca_id, ca in self.cas.items()
            if ca.root_certificate is not None
        }
        for spec in sorted(scenario.networks, key=lambda n: n.network_id):
            rules = self._parse_rules(spec.rules)
            self.networks[spec.network_id] = TrustNetwork(spec.network_id, rules, anchors)

        for spec in sorted(scenario.vasps, key=lambda v: v.vasp_id):
            keypair = crypto.keypair_from_label(f"vasp:{self.seed}", spec.vasp_id)
            rng = self._derived_rng("vasp-rng", spec.vasp_id)
            node = VaspNode(
                vasp_id=spec.vasp_id, keypair=keypair, ca=self.cas[spec.ca],
                rng=rng, env=self, chain_id=scenario.chain_id,
            )
            node.enroll_vasp_certificate(
                self._vasp_registration_attributes(spec.vasp_id), 0, VASP_CERT_VALIDITY
            )
            node.trust_anchors.update(anchors)
            for network_id in spec.networks:
                node.join(self.networks[network_id], 0)
            self.vasps[spec.vasp_id] = node

        for spec in scenario.peering_links:
            link = PeeringLink(
                gateway_vasp_a=spec.vasp_a, network_a=spec.network_a,
                gateway_vasp_b=spec.vasp_b, network_b=spec.network_b,
            )
            self.networks[spec.network_a].peering_links.append(link)
            self.networks[spec.network_b].peering_links.append(link)

        for customer in scenario.customers:
            self._customer_home[customer.customer_id] = customer.vasp
            self._customer_model[customer.customer_id] = customer.custody_model
            self._customer_class[customer.customer_id] = customer.requested_class

        for suspect in scenario.suspects:
            if suspect.account_id is not None:
                self._blocklist(suspect.account_id)
            if suspect.key_hash_hex is not None:
                self._blocklist(bytes.fromhex(suspect.key_hash_hex))
            if suspect.customer is not None:
                # Account refs resolve when the account opens; the key hash is
                # derivable now since keys are label-seeded.
                self._blocklist(self._account_id_for(suspect.customer))
                model = self._customer_model[suspect.customer]
                if model is not CustodyModel.COMMINGLED:
                    wallet = self._customer_keypair(suspect.customer)
                    if wallet is not None:
                        self._blocklist(digest(wallet.public_key))

    def _parse_rules(self, raw) -> OperatingRules:
        kwargs: dict[str, Any] = {}
        for key in ("rules_version", "directory_sync_period", "crl_exchange_period", "ack_timeout"):
            if key in raw:
                kwargs[key] = int(raw[key])
        if "minimum_certificate_class" in raw:
            kwargs["minimum_certificate_class"] = CertClass.from_label(
                str(raw["minimum_certificate_class"])
            )
        if "required_disclosure" in raw:
            kwargs["required_disclosure_policy"] = DisclosurePolicy(
                frozenset(str(a) for a in raw["required_disclosure"])
            )
        return OperatingRules(**kwargs)

    def _vasp_registration_attributes(self, vasp_id: str) -> dict[str, str]:
        return {
            "name": vasp_id,
            "email": f"ops@{vasp_id}",
            "government_id": f"gov-{vasp_id}",
            "address": f"1 {vasp_id} way",
            "organization_vetting_ref": f"vet-{vasp_id}",
            "vasp_id": vasp_id,
        }

    def _derived_rng(self, namespace: str, label: str) -> random.Random:
        seed_bytes = digest(f"{namespace}:{self.seed}:{label}".encode())
        return random.Random(int.from_bytes(seed_bytes, "big"))

    def _blocklist(self, ref) -> None:
        for vasp_id in sorted(self.vasps):
            self.vasps[vasp_id].suspect_list.add(ref)

    def _account_id_for(self, customer_id: str) -> str:
        return f"acct-{customer_id}"

    def _customer_keypair(self, customer_id: str) -> Optional[KeyPair]:
        model = self._customer_model.get(customer_id)
        if model is CustodyModel.COMMINGLED:
            return None
        if model is CustodyModel.KEY_CUSTODY:
            return None  # generated inside the VASP at open time
        return crypto.keypair_from_label(f"customer:{self.seed}", customer_id)

    def _p2p_wallet(self, name: str) -> KeyPair:
        wallet = self._wallets.get(name)
        if wallet is None:
            wallet = crypto.keypair_from_label(f"p2p:{self.seed}", name)
            self._wallets[name] = wallet
        return wallet

    # -- script execution ---------------------------------------------------------

    def _run_action(self, action: ScriptAction) -> None:
        params = action.params
        if action.action == "open_account":
            self._open_customer(str(params["customer"]))
        elif action.action == "enroll":
            customer = str(params["customer"])
            vasp = self.vasps[self._customer_home[customer]]
            vasp.enroll_customer_certificate(
                self._account_id_for(customer),
                self._customer_class[customer],
                self.now,
                CUSTOMER_CERT_VALIDITY,
            )
        elif action.action == "transfer":
            origin = str(params["origin"])
            vasp = self.vasps[self._customer_home[origin]]
            target = self._build_target(params["target"])
            outcome = vasp.initiate_transfer(
                self._account_id_for(origin), target,
                int(params["amount"]), str(params.get("asset", "coin")),
            )
            self.scripted_transfers.append(ScriptedTransfer(action, outcome, vasp.vasp_id))
        elif action.action == "p2p_transfer":
            self._p2p_transfer(params)
        elif action.action == "revoke_cert":
            customer = str(params["customer"])
            vasp = self.vasps[self._customer_home[customer]]
            account = vasp.accounts[self._account_id_for(customer)]
            if account.certificate_serial is None:
                raise ValueError(f"customer {customer} has no certificate to revoke")
            reason = RevocationReason(str(params.get("reason", "unspecified")))
            vasp.ca.revoke(account.certificate_serial, reason, self.now)
            self.log(vasp.ca.ca_id, "certificate_revoked",
                     serial=account.certificate_serial.hex(), reason=reason.value)
        elif action.action == "drop_link":
            link = self._link(str(params["a"]), str(params["b"]))
            link.down_until = self.now + int(params["period"])
            self.log("script", "link_down", a=str(params["a"]), b=str(params["b"]),
                     until=link.down_until)
        elif action.action == "advance":
            pass

    def _open_customer(self, customer_id: str) -> None:
        vasp = self.vasps[self._customer_home[customer_id]]
        spec = next(c for c in self.scenario.customers if c.customer_id == customer_id)
        wallet = self._customer_keypair(customer_id)
        vasp.open_account(
            subject_id=customer_id,
            attributes=dict(spec.attributes),
            custody_model=spec.custody_model,
            customer_wallet=wallet if spec.custody_model is CustodyModel.MEDIATED else None,
            account_id=self._account_id_for(customer_id),
            now=self.now,
        )

    def _build_target(self, raw) -> TransferTarget:
        if "customer" in raw:
            customer = str(raw["customer"])
            model = self._customer_model[customer]
            if model is CustodyModel.COMMINGLED or model is CustodyModel.KEY_CUSTODY:
                home = self._customer_home[customer]
                if model is CustodyModel.KEY_CUSTODY:
                    account = self.vasps[home].accounts.get(self._account_id_for(customer))
                    if account is not None and account.customer_public_key is not None:
                        return TransferTarget.from_key_hash(digest(account.customer_public_key))
                return TransferTarget.from_account(home, self._account_id_for(customer))
            wallet = self._customer_keypair(customer)
            assert wallet is not None
            return TransferTarget.from_key_hash(digest(wallet.public_key))
        if "customer_key" in raw:
            customer = str(raw["customer_key"])
            wallet = self._customer_keypair(customer)
            if wallet is None:
                home = self._customer_home[customer]
                account = self.vasps[home].accounts[self._account_id_for(customer)]
                if account.customer_public_key is None:
                    raise ValueError(f"customer {customer} has no key")
                return TransferTarget.from_public_key(account.customer_public_key)
            return TransferTarget.from_public_key(wallet.public_key)
        if "vasp" in raw:
            return TransferTarget.from_account(str(raw["vasp"]), str(raw["account"]))
        return TransferTarget.from_key_hash(bytes.fromhex(str(raw["key_hash_hex"])))

    def _p2p_transfer(self, params) -> None:
        sender = self._p2p_wallet(str(params["from_wallet"]))
        if "to_wallet" in params:
            receiver_key = self._p2p_wallet(str(params["to_wallet"])).public_key
        else:
            customer = str(params["to_customer"])
            wallet = self._customer_keypair(customer)
            if wallet is None:
                raise ValueError(f"p2p target customer {customer} has no key")
            receiver_key = wallet.public_key
        nonce = digest(
            f"p2p-nonce:{self.seed}:{params['from_wallet']}:{self.now}:{self._seq}".encode()
        )[:8]
        tx = build_transaction(
            sender, sender.public_key, receiver_key,
            int(params["amount"]), str(params.get("asset", "coin")), nonce,
        )
        self.submit_tx(f"p2p:{params['from_wallet']}", tx)

    # -- main loop ---------------------------------------------------------------

    def advance_to(self, tick: int) -> None:
        """Process every tick up to and including the given one."""
        while self._next_tick <= tick:
            self._tick(self._next_tick)
            self._next_tick += 1

    def _tick(self, tick: int) -> None:
        self.now = tick
        script = self.scenario.script
        while self._script_cursor < len(script) and script[self._script_cursor].tick == tick:
            self._run_action(script[self._script_cursor])
            self._script_cursor += 1
        self._deliver_messages(tick)
        self._periodic_duties(tick)
        for vasp_id in sorted(self.vasps):
            self.vasps[vasp_id].sweep_ack_timeouts(tick)
        for event in self.chain.tick(tick):
            self.log("chain", "chain_confirmed",
                     tx=event.transaction.tx_id.hex(), block=event.block_index)
            for vasp_id in sorted(self.vasps):
                self.vasps[vasp_id].on_chain_confirmation(
                    event.transaction, event.confirmed_tick
                )
        self._check_invariants(tick)

    def run(self) -> "RunResult":
        self.advance_to(self.scenario.horizon())
        self.metrics.final_tick = self.now
        self.metrics.directory_convergence_tick = self._last_view_change
        self._finalize()
        return RunResult(self)

    def _deliver_messages(self, tick: int) -> None:
        due = self._queue.pop(tick, [])
        due.sort(key=lambda m: (m.dst, m.seq))
        for message in due:
            # In-flight messages die with the link.
            if not self._link(message.src, message.dst).up(tick):
                self.metrics.messages_dropped += 1
                self.log(message.src, "message_dropped", to=message.dst,
                         kind=message.kind, reason="link-down")
                continue
            target = self.vasps.get(message.dst)
            if target is None:
                self.log(message.dst, "message_ignored", kind=message.kind)
                continue
            target.on_message(message.kind, message.payload, message.src)

    def _periodic_duties(self, tick: int) -> None:
        published: set[str] = set()
        for network_id in sorted(self.networks):
            network = self.networks[network_id]
            if tick % network.rules.directory_sync_period == 0:
                for member_id in network.member_ids():
                    if member_id in published:
                        continue
                    node = self.vasps[member_id]
                    # Push a versioned delta on change; otherwise heartbeat the
                    # current version so lagging members pull (anti-entropy).
                    if (
                        node._last_snapshot is None
                        or node.directory_entries(tick) != node._last_snapshot.entries
                    ):
                        node.publish_directory(tick)
                    else:
                        node.announce_directory(tick)
                    published.add(member_id)
        advertised: set[str] = set()
        for network_id in sorted(self.networks):
            network = self.networks[network_id]
            if tick % network.rules.directory_sync_period == 0:
                for gateway_id in network.gateway_ids():
                    if gateway_id in advertised:
                        continue
                    self.vasps[gateway_id].advertise_reachability(tick)
                    advertised.add(gateway_id)
        refreshed: set[str] = set()
        for network_id in sorted(self.networks):
            network = self.networks[network_id]
            if tick % network.rules.crl_exchange_period == 0:
                for member_id in network.member_ids():
                    if member_id in refreshed:
                        continue
                    node = self.vasps[member_id]
                    node.ingest_crls([self._latest_crl(node.ca, tick)], broadcast=True)
                    refreshed.add(member_id)

    def _latest_crl(self, ca: CertificateAuthority, tick: int):
        key = (ca.ca_id, tick)
        if key not in self._ca_crl_cache:
            self._ca_crl_cache[key] = ca.generate_crl(tick)
        return self._ca_crl_cache[key]

    def _check_invariants(self, tick: int) -> None:
        for vasp_id in sorted(self.vasps):
            try:
                self.vasps[vasp_id].check_account_invariants()
            except Exception as exc:
                self.breaches.append(f"tick {tick}: {vasp_id}: {exc}")

    def _finalize(self) -> None:
        if not self.chain.verify_chain():
            self.breaches.append("chain hash verification failed")
        for vasp_id in sorted(self.vasps):
            vasp = self.vasps[vasp_id]
            audit = vasp.audit_travel_rule()
            reconcile = vasp.reconcile()
            self.metrics.audit_violations += len(audit.violations)
            self.metrics.reconciliation_orphans += len(reconcile.orphan_chain_txs)
            self.metrics.unconfirmed_records += len(reconcile.unconfirmed_records)
            self.log(vasp_id, "audit_report", records=audit.records_checked,
                     violations=len(audit.violations))
            self.log(vasp_id, "reconcile_report", matched=reconcile.matched,
                     orphans=len(reconcile.orphan_chain_txs),
                     unconfirmed=len(reconcile.unconfirmed_records))
        for breach in self.scan_blind_broadcasts():
            self.breaches.append(breach)

    # -- post-run verification helpers ---------------------------------------------

    def scan_blind_broadcasts(self) -> list[str]:
        """Event-log scan: every VASP-submitted tx needs a prior accepting ack
        with the same binding digest."""
        accepted_bindings: dict[str, int] = {}
        for record in self.log_.entries:
            if record.event == "ack_sent" and dict(record.details).get("decision") == "accept":
                binding = dict(record.details)["binding"]
                accepted_bindings.setdefault(binding, record.tick)
        problems = []
        for record in self.log_.entries:
            if record.event != "tx_submitted" or record.actor not in self.vasps:
                continue
            binding = dict(record.details)["binding"]
            first_ack = accepted_bindings.get(binding)
            if first_ack is None or first_ack > record.tick:
                problems.append(
                    f"tx {binding[:16]} submitted by {record.actor} without prior accepted ack"
                )
        return problems

    def audit_reports(self) -> dict[str, Any]:
        return {vasp_id: self.vasps[vasp_id].audit_travel_rule() for vasp_id in sorted(self.vasps)}

    def reconcile_reports(self) -> dict[str, Any]:
        return {vasp_id: self.vasps[vasp_id].reconcile() for vasp_id in sorted(self.vasps)}


@dataclass
class RunResult:
    sim: Simulation

    @property
    def event_log(self) -> EventLog:
        return self.sim.log_

    @property
    def metrics(self) -> Metrics:
        return self.sim.metrics

    @property
    def digest_hex(self) -> str:
        return self.sim.log_.running_digest.hex()

    @property
    def breaches(self) -> list[str]:
        return self.sim.breaches


def run_scenario(scenario: Scenario, seed: Optional[int] = None) -> RunResult:
    return Simulation(scenario, seed=seed).run()
