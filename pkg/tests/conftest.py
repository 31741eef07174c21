import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vaspnet import crypto
from vaspnet.ca import CertificateAuthority
from vaspnet.scenario import parse_scenario


@pytest.fixture
def rng():
    return random.Random(0xA11CE)


@pytest.fixture
def root_ca(rng):
    ca = CertificateAuthority("ca-test", crypto.keypair_from_label("ca", "ca-test"), rng)
    ca.self_sign_root(0, 1_000_000)
    return ca


def make_scenario(
    seed=7,
    networks=("net-a",),
    cas=("ca-1",),
    vasps=None,
    peering=(),
    customers=None,
    suspects=(),
    script=(),
    **overrides,
):
    """Programmatic scenario builder mirroring the YAML schema."""
    network_ids = [n["network_id"] if isinstance(n, dict) else n for n in networks]
    if vasps is None:
        vasps = [
            {"vasp_id": "v1", "ca": "ca-1", "networks": network_ids},
            {"vasp_id": "v2", "ca": "ca-1", "networks": network_ids},
        ]
    if customers is None:
        customers = [
            {"customer_id": "alice", "vasp": "v1", "custody_model": "mediated",
             "attributes": {"name": "Alice", "email": "alice@example"}},
            {"customer_id": "bob", "vasp": "v2", "custody_model": "mediated",
             "attributes": {"name": "Bob", "email": "bob@example"}},
        ]
    data = {
        "seed": seed,
        "networks": [
            n if isinstance(n, dict) else {"network_id": n} for n in networks
        ],
        "cas": [c if isinstance(c, dict) else {"ca_id": c} for c in cas],
        "vasps": vasps,
        "peering_links": list(peering),
        "customers": customers,
        "suspects": list(suspects),
        "script": list(script),
    }
    data.update(overrides)
    return parse_scenario(data)


def standard_script(extra=()):
    """Open and enroll alice and bob, then run the given extra actions."""
    base = [
        {"tick": 0, "action": "open_account", "customer": "alice"},
        {"tick": 0, "action": "open_account", "customer": "bob"},
        {"tick": 1, "action": "enroll", "customer": "alice"},
        {"tick": 1, "action": "enroll", "customer": "bob"},
    ]
    return base + list(extra)
