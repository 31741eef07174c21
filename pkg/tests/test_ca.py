import random

import pytest

from vaspnet import crypto
from vaspnet.ca import (
    AlreadyRevoked,
    CertClass,
    CertStatus,
    Certificate,
    CertificateAuthority,
    CertificateProfile,
    ClassTooLow,
    DEFAULT_CLASS_TABLE,
    DEFAULT_PROFILE,
    InvalidValidity,
    KeyAlreadyBound,
    RegistrationRejected,
    RevocationReason,
    RevocationView,
    UnknownBase,
    UnknownSerial,
    ValidationStatus,
    apply_delta_crl,
    validate_certificate,
)

CLASS1_ATTRS = {"name": "N", "email": "n@example"}
CLASS2_ATTRS = {**CLASS1_ATTRS, "government_id": "g1", "address": "addr"}
CLASS3_ATTRS = {**CLASS2_ATTRS, "organization_vetting_ref": "org-7"}


def make_ca(name="ca-x", seed=1):
    ca = CertificateAuthority(name, crypto.keypair_from_label("catest", name), random.Random(seed))
    ca.self_sign_root(0, 1_000_000)
    return ca


def issue(ca, subject="sub", attrs=CLASS1_ATTRS, key_label="k", requested=CertClass.CLASS1,
          profile=DEFAULT_PROFILE, now=0, not_after=10_000):
    registration = ca.register_subject(subject, attrs, requested, now)
    key = crypto.keypair_from_label("subject", key_label)
    return ca.issue_certificate(registration, key.public_key, profile, now, not_after, now)


def required_attrs_for(cls: CertClass) -> set:
    """Independent oracle: cumulative union of the class table."""
    needed = set()
    for c in CertClass:
        needed |= DEFAULT_CLASS_TABLE[c]
        if c == cls:
            break
    return needed


class TestRootCertificate:
    def test_root_self_anchored_valid(self):
        ca = make_ca()
        root = ca.root_certificate
        result = validate_certificate(root, {ca.ca_id: root}, now=5)
        assert result.ok

    def test_root_deterministic_for_same_inputs(self):
        a = make_ca("ca-d", seed=3).root_certificate
        b = make_ca("ca-d", seed=3).root_certificate
        assert a.to_bytes() == b.to_bytes()

    def test_tampered_subject_fails_signature(self):
        ca = make_ca()
        root = ca.root_certificate
        forged = Certificate(**{**root.__dict__, "subject_id": root.subject_id + "x",
                                "issuer_id": root.issuer_id + "x"})
        anchors = {forged.issuer_id: forged}
        assert (
            validate_certificate(forged, anchors, now=5).status
            is ValidationStatus.BAD_SIGNATURE
        )

    def test_invalid_validity_window(self):
        ca = CertificateAuthority("ca-w", crypto.keypair_from_label("catest", "w"),
                                  random.Random(0))
        with pytest.raises(InvalidValidity):
            ca.self_sign_root(10, 10)


class TestRegistration:
    # The class table itself is the oracle: every (attrs, requested) pair is
    # checked against an independent cumulative-union computation.
    @pytest.mark.parametrize("attrs,requested,expected", [
        (CLASS1_ATTRS, CertClass.CLASS1, CertClass.CLASS1),
        (CLASS1_ATTRS, CertClass.CLASS3, CertClass.CLASS1),
        (CLASS2_ATTRS, CertClass.CLASS2, CertClass.CLASS2),
        (CLASS2_ATTRS, CertClass.CLASS3, CertClass.CLASS2),
        (CLASS3_ATTRS, CertClass.CLASS3, CertClass.CLASS3),
        (CLASS3_ATTRS, CertClass.CLASS1, CertClass.CLASS1),
    ])
    def test_assignment_table(self, attrs, requested, expected):
        ca = make_ca()
        record = ca.register_subject("s", attrs, requested, 0)
        assert record.assigned_class == expected
        assert required_attrs_for(expected) <= set(attrs)

    def test_assignment_matches_oracle_over_random_subsets(self):
        ca = make_ca()
        rng = random.Random(20)
        universe = sorted(required_attrs_for(CertClass.CLASS3))
        for _ in range(200):
            attrs = {a: "v" for a in universe if rng.random() < 0.6}
            requested = rng.choice(list(CertClass))
            expected = None
            for cls in CertClass:
                if cls <= requested and required_attrs_for(cls) <= set(attrs):
                    expected = cls
            if expected is None:
                with pytest.raises(RegistrationRejected):
                    ca.register_subject("s", attrs, requested, 0)
            else:
                record = ca.register_subject("s", attrs, requested, 0)
                assert record.assigned_class == expected

    def test_empty_attributes_rejected(self):
        with pytest.raises(RegistrationRejected):
            make_ca().register_subject("s", {}, CertClass.CLASS1, 0)

    def test_verification_log_populated(self):
        record = make_ca().register_subject("s", CLASS2_ATTRS, CertClass.CLASS3, 0)
        checks = dict(record.verification_log)
        assert checks["class1_attributes"] and checks["class2_attributes"]
        assert not checks["class3_attributes"]


class TestIssuance:
    def test_issued_cert_validates_against_root(self):
        ca = make_ca()
        cert = issue(ca)
        assert validate_certificate(cert, {ca.ca_id: ca.root_certificate}, now=1).ok

    def test_rebind_to_other_subject_refused(self):
        ca = make_ca()
        issue(ca, subject="first", key_label="shared")
        with pytest.raises(KeyAlreadyBound):
            issue(ca, subject="second", key_label="shared")

    def test_rebind_after_revocation_allowed(self):
        ca = make_ca()
        cert = issue(ca, subject="first", key_label="shared2")
        ca.revoke(cert.serial, RevocationReason.KEY_COMPROMISE, 1)
        cert2 = issue(ca, subject="second", key_label="shared2", now=2)
        assert cert2.serial != cert.serial

    def test_same_subject_reissue_supersedes(self):
        ca = make_ca()
        first = issue(ca, subject="sub", key_label="k9")
        second = issue(ca, subject="sub", key_label="k9", now=1)
        assert first.serial != second.serial
        assert ca.check_status(first.serial, 2).status is CertStatus.REVOKED
        lookup = ca.find_certificate_by_pubkey(second.subject_public_key, 2)
        assert lookup.certificate.serial == second.serial
        assert lookup.status is CertStatus.GOOD

    def test_profile_minimum_class_enforced(self):
        ca = make_ca()
        strict = CertificateProfile(profile_id="strict", minimum_class=CertClass.CLASS2)
        with pytest.raises(ClassTooLow):
            issue(ca, attrs=CLASS1_ATTRS, requested=CertClass.CLASS1, profile=strict)

    def test_tbs_bytes_reencode_identically(self):
        ca = make_ca()
        cert = issue(ca)
        decoded = Certificate.from_bytes(cert.to_bytes())
        assert decoded == cert
        assert decoded.to_bytes() == cert.to_bytes()
        assert decoded.signed_payload() == cert.signed_payload()


class TestValidationOrder:
    def test_fresh_cert_valid(self):
        ca = make_ca()
        cert = issue(ca)
        assert validate_certificate(cert, {ca.ca_id: ca.root_certificate}, now=500).ok

    def test_expiry_boundary(self):
        ca = make_ca()
        cert = issue(ca, not_after=100)
        anchors = {ca.ca_id: ca.root_certificate}
        assert validate_certificate(cert, anchors, now=100).ok
        assert validate_certificate(cert, anchors, now=101).status is ValidationStatus.EXPIRED

    def test_unknown_issuer_wins_over_everything(self):
        ca = make_ca()
        cert = issue(ca, not_after=100)
        assert validate_certificate(cert, {}, now=999).status is ValidationStatus.UNKNOWN_ISSUER

    def test_bad_signature_beats_expiry(self):
        ca = make_ca()
        cert = issue(ca, not_after=100)
        forged = Certificate(**{**cert.__dict__, "subject_id": "evil"})
        anchors = {ca.ca_id: ca.root_certificate}
        assert validate_certificate(forged, anchors, now=999).status is ValidationStatus.BAD_SIGNATURE

    def test_revoked_after_expiry_check(self):
        ca = make_ca()
        cert = issue(ca)
        ca.revoke(cert.serial, RevocationReason.KEY_COMPROMISE, 5)
        view = RevocationView()
        view.merge_crl(ca.generate_crl(6))
        anchors = {ca.ca_id: ca.root_certificate}
        result = validate_certificate(cert, anchors, now=10, revocation=view)
        assert result.status is ValidationStatus.REVOKED

    def test_revocation_monotone(self):
        # Once revoked, never valid again at any later tick.
        ca = make_ca()
        cert = issue(ca)
        ca.revoke(cert.serial, RevocationReason.SUPERSEDED, 5)
        view = RevocationView()
        view.merge_crl(ca.generate_crl(6))
        anchors = {ca.ca_id: ca.root_certificate}
        for now in range(7, 200, 13):
            assert not validate_certificate(cert, anchors, now=now, revocation=view).ok

    def test_chain_restriction(self):
        ca = make_ca()
        profile = CertificateProfile(profile_id="btc-only",
                                     permitted_chains=frozenset({"btc"}))
        cert = issue(ca, profile=profile)
        anchors = {ca.ca_id: ca.root_certificate}
        assert validate_certificate(cert, anchors, now=1, chain_id="btc").ok
        result = validate_certificate(cert, anchors, now=1, chain_id="eth")
        assert result.status is ValidationStatus.PROFILE_VIOLATION


class TestRevocationAndStatus:
    def test_revoke_then_status(self):
        ca = make_ca()
        cert = issue(ca)
        ca.revoke(cert.serial, RevocationReason.KEY_COMPROMISE, 7)
        response = ca.check_status(cert.serial, 8)
        assert response.status is CertStatus.REVOKED
        assert response.reason is RevocationReason.KEY_COMPROMISE
        assert response.revoked_at == 7
        assert crypto.verify(ca.root_certificate.subject_public_key,
                             response.signed_payload(), response.responder_signature)

    def test_unknown_serial(self):
        with pytest.raises(UnknownSerial):
            make_ca().revoke(b"\x00" * 16, RevocationReason.UNSPECIFIED, 0)

    def test_double_revoke(self):
        ca = make_ca()
        cert = issue(ca)
        ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, 0)
        with pytest.raises(AlreadyRevoked):
            ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, 1)

    def test_status_good_and_unknown(self):
        ca = make_ca()
        cert = issue(ca)
        assert ca.check_status(cert.serial, 1).status is CertStatus.GOOD
        assert ca.check_status(b"\xff" * 16, 1).status is CertStatus.UNKNOWN


class TestCrl:
    def test_first_crl_empty(self):
        ca = make_ca()
        crl = ca.generate_crl(0)
        assert crl.crl_number == 1
        assert crl.entries == frozenset()
        assert crypto.verify(ca.root_certificate.subject_public_key,
                             crl.signed_payload(), crl.signature)

    def test_delta_contains_only_new_entries(self):
        ca = make_ca()
        certs = [issue(ca, subject=f"s{i}", key_label=f"dk{i}") for i in range(4)]
        base = ca.generate_crl(0)
        ca.revoke(certs[0].serial, RevocationReason.KEY_COMPROMISE, 1)
        ca.revoke(certs[1].serial, RevocationReason.SUPERSEDED, 2)
        delta = ca.generate_delta_crl(base.crl_number, 3)
        assert {e.serial for e in delta.entries} == {certs[0].serial, certs[1].serial}

    def test_unknown_base(self):
        with pytest.raises(UnknownBase):
            make_ca().generate_delta_crl(5, 0)

    def test_delta_fold_equals_full_over_random_sequences(self):
        # Equivalence oracle: folding deltas from any base reproduces every
        # full CRL's entry set, over 100 random revocation interleavings.
        for trial in range(100):
            rng = random.Random(1000 + trial)
            ca = make_ca(seed=trial)
            certs = [issue(ca, subject=f"s{i}", key_label=f"t{trial}-{i}") for i in range(10)]
            unrevoked = list(certs)
            crls = [ca.generate_crl(0)]
            for step in range(rng.randrange(1, 12)):
                if unrevoked and rng.random() < 0.6:
                    cert = unrevoked.pop(rng.randrange(len(unrevoked)))
                    ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, step)
                if rng.random() < 0.5:
                    crls.append(ca.generate_crl(step))
            final = ca.generate_crl(99)
            base = crls[rng.randrange(len(crls))]
            delta = ca.generate_delta_crl(base.crl_number, 100)
            assert apply_delta_crl(base, delta) == final.entries

    def test_report_lines_format(self):
        ca = make_ca()
        cert = issue(ca)
        ca.revoke(cert.serial, RevocationReason.KEY_COMPROMISE, 3)
        lines = ca.generate_crl(4).report_lines()
        assert lines == [f"{cert.serial.hex()},keyCompromise,3"]


class TestRevocationView:
    def test_stale_crl_ignored(self):
        ca = make_ca()
        cert = issue(ca)
        view = RevocationView()
        ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, 1)
        newer = ca.generate_crl(2)
        assert view.merge_crl(newer)
        older_replay = ca.generate_crl(3)  # number 2 is held; recreate number 1 scenario
        assert view.crl_number(ca.ca_id) == newer.crl_number
        view.merge_crl(older_replay)
        assert view.crl_number(ca.ca_id) == older_replay.crl_number

    def test_delta_requires_exact_base(self):
        ca = make_ca()
        cert = issue(ca)
        base = ca.generate_crl(0)
        view = RevocationView()
        view.merge_crl(base)
        ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, 1)
        delta = ca.generate_delta_crl(base.crl_number, 2)
        assert view.merge_delta(delta)
        assert view.is_revoked(ca.ca_id, cert.serial)
        # replay of the same delta no longer applies
        assert not view.merge_delta(delta)

    def test_delta_exchange_equals_full_exchange(self):
        ca = make_ca()
        certs = [issue(ca, subject=f"s{i}", key_label=f"x{i}") for i in range(5)]
        base = ca.generate_crl(0)
        for i, cert in enumerate(certs):
            ca.revoke(cert.serial, RevocationReason.UNSPECIFIED, i)
        via_delta = RevocationView()
        via_delta.merge_crl(base)
        via_delta.merge_delta(ca.generate_delta_crl(base.crl_number, 10))
        via_full = RevocationView()
        via_full.merge_crl(ca.generate_crl(11))
        assert via_delta.entries(ca.ca_id) == via_full.entries(ca.ca_id)


class TestLookup:
    def test_lookup_returns_cert_and_disclosed_attributes(self):
        ca = make_ca()
        attrs = {**CLASS1_ATTRS, "address": "12 Main", "vasp_id": "v9", "secret": "hidden"}
        registration = ca.register_subject("sub", attrs, CertClass.CLASS1, 0)
        key = crypto.keypair_from_label("subject", "lk")
        cert = ca.issue_certificate(registration, key.public_key, DEFAULT_PROFILE, 0, 100, 0)
        lookup = ca.find_certificate_by_pubkey(key.public_key, 1)
        assert lookup.certificate == cert
        assert lookup.attributes == {"address": "12 Main", "name": "N", "vasp_id": "v9"}
        assert lookup.status is CertStatus.GOOD

    def test_lookup_unknown_key(self):
        ca = make_ca()
        assert ca.find_certificate_by_pubkey(b"\x07" * 32, 0) is None

    def test_lookup_revoked_flagged(self):
        ca = make_ca()
        cert = issue(ca, key_label="rk")
        ca.revoke(cert.serial, RevocationReason.KEY_COMPROMISE, 1)
        lookup = ca.find_certificate_by_pubkey(cert.subject_public_key, 2)
        assert lookup is not None
        assert lookup.status is CertStatus.REVOKED
        assert lookup.certificate.serial == cert.serial
