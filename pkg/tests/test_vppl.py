"""Policy language: parsing, signing, evaluation, oracle equivalence."""

import itertools
import random

import pytest

from polaris.encoding import canonical_json
from polaris.errors import NotFound, PolicySchemaError, PolicySyntaxError
from polaris.presentation import VerifiedAttributes, VerifiedTriple
from polaris.vppl import (
    Decision,
    Expression,
    evaluate_expression,
    evaluate_policy,
    evaluate_rule,
    parse_policy,
    policy_signing_bytes,
    serialize_policy,
    sign_policy,
    verify_policy_signature,
)

import vppl_oracle


MINIMAL = {
    "policy_id": "p1",
    "combining": "permit-overrides",
    "rules": [
        {
            "decision": "permit",
            "issuers": [],
            "conditions": [
                {"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"}
            ],
        }
    ],
}


def _triples(*items) -> VerifiedAttributes:
    return VerifiedAttributes(
        triples=[VerifiedTriple(issuer_did=i, name=n, value=v) for i, n, v in items]
    )


GOV = "did:polaris:aaaaaaaa-0000-4000-8000-000000000001"
OTHER = "did:polaris:aaaaaaaa-0000-4000-8000-000000000002"


# ----------------------------------------------------------------------
# Parse / serialize
# ----------------------------------------------------------------------


def test_parse_minimal():
    policy = parse_policy(canonical_json(MINIMAL))
    assert policy.policy_id == "p1"
    assert len(policy.rules) == 1
    assert policy.rules[0].conditions[0].terminal_name == "age"


def test_parse_reports_syntax_position():
    with pytest.raises(PolicySyntaxError) as err:
        parse_policy(b'{"policy_id": ')
    assert err.value.line >= 1


def test_parse_rejects_ordering_on_string():
    bad = {
        "policy_id": "p",
        "combining": "permit-overrides",
        "rules": [
            {
                "decision": "permit",
                "issuers": [],
                "conditions": [
                    {"attr": "claims.degree", "fn": ">=", "value": "PhD",
                     "type": "string"}
                ],
            }
        ],
    }
    with pytest.raises(PolicySchemaError) as err:
        parse_policy(canonical_json(bad))
    assert "rules[0].conditions[0]" in err.value.path


@pytest.mark.parametrize(
    "mutate,path_fragment",
    [
        (lambda d: d.update(combining="most-specific"), "combining"),
        (lambda d: d.update(rules=[]), "rules"),
        (lambda d: d["rules"][0].update(decision="allow"), "decision"),
        (lambda d: d["rules"][0].update(issuers=["not-a-did"]), "issuers[0]"),
        (lambda d: d["rules"][0].update(conditions=[]), "conditions"),
        (lambda d: d["rules"][0]["conditions"][0].update(attr="age"), "attr"),
        (lambda d: d["rules"][0]["conditions"][0].update(fn="~="), "fn"),
        (lambda d: d["rules"][0]["conditions"][0].update(type="float"), "type"),
        (lambda d: d["rules"][0]["conditions"][0].update(value="18"), "value"),
        (lambda d: d["rules"][0]["conditions"][0].update(fn="in", value=[]), "value"),
        (lambda d: d["rules"][0]["conditions"][0].update(fn="contains"), "fn"),
    ],
)
def test_parse_schema_violations(mutate, path_fragment):
    import copy

    data = copy.deepcopy(MINIMAL)
    mutate(data)
    with pytest.raises(PolicySchemaError) as err:
        parse_policy(canonical_json(data))
    assert path_fragment in err.value.path


def test_serialize_is_deterministic_fixpoint():
    policy = parse_policy(canonical_json(MINIMAL))
    blob = serialize_policy(policy)
    assert blob == serialize_policy(policy)
    assert serialize_policy(parse_policy(blob)) == blob
    assert parse_policy(blob) == policy


def test_parse_serialize_roundtrip_random():
    rng = random.Random(7)
    for _ in range(100):
        data = vppl_oracle.random_policy(rng)
        policy = parse_policy(canonical_json(data))
        assert parse_policy(serialize_policy(policy)) == policy


# ----------------------------------------------------------------------
# Signing
# ----------------------------------------------------------------------


def test_sign_and_verify(registry, identity):
    owner_did, owner_keys = identity("policy-owner")
    from polaris.vdr import LocalVdrClient

    client = LocalVdrClient(registry)
    policy = parse_policy(canonical_json(MINIMAL))
    assert verify_policy_signature(policy, client) == "unsigned"
    signed = sign_policy(policy, owner_did, owner_keys.private_key)
    assert verify_policy_signature(signed, client) == "valid"
    assert policy_signing_bytes(signed) == policy_signing_bytes(policy)


def test_signature_excluded_from_signed_bytes(identity):
    owner_did, owner_keys = identity("policy-owner")
    policy = parse_policy(canonical_json(MINIMAL))
    signed = sign_policy(policy, owner_did, owner_keys.private_key)
    assert b"signature" not in policy_signing_bytes(signed)
    assert b"signature" in serialize_policy(signed)


def test_mutated_rule_invalidates_signature(registry, identity):
    owner_did, owner_keys = identity("policy-owner")
    from polaris.vdr import LocalVdrClient
    import dataclasses

    client = LocalVdrClient(registry)
    policy = sign_policy(
        parse_policy(canonical_json(MINIMAL)), owner_did, owner_keys.private_key
    )
    flipped = dataclasses.replace(
        policy,
        rules=(dataclasses.replace(policy.rules[0], decision="deny"),),
    )
    assert verify_policy_signature(flipped, client) == "invalid"


def test_unregistered_signer_raises(identity, keypool):
    rogue = keypool("rogue-owner")
    policy = parse_policy(canonical_json(MINIMAL))
    signed = sign_policy(
        policy, "did:polaris:00000000-0000-4000-8000-0000000000ee", rogue.private_key
    )

    class EmptyRegistry:
        def resolve(self, did):
            raise NotFound(did)

    with pytest.raises(NotFound):
        verify_policy_signature(signed, EmptyRegistry())


# ----------------------------------------------------------------------
# Expression evaluation
# ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "fn,target,value_type,value,expected",
    [
        (">=", 18, "int", "25", True),
        (">=", 18, "int", "17", False),
        (">=", 18, "int", "abc", False),
        (">=", 18, "int", "+19", False),
        (">=", 18, "int", "-1", False),
        ("<", 0, "int", "-5", True),
        ("==", "PhD", "string", "PhD", True),
        ("==", "PhD", "string", "phd", False),
        ("!=", "PhD", "string", "MSc", True),
        ("in", ["a", "b"], "string", "b", True),
        ("in", ["a", "b"], "string", "c", False),
        ("in", [1, 3], "int", "3", True),
        ("contains", "adm", "string", "admin,ops", True),
        ("contains", "adm", "string", "ops", False),
        ("==", True, "bool", "true", True),
        ("==", True, "bool", "True", False),
        ("!=", False, "bool", "true", True),
    ],
)
def test_evaluate_expression(fn, target, value_type, value, expected):
    expr = Expression(
        attribute_path="claims.x", function=fn, target_value=target,
        value_type=value_type,
    )
    assert evaluate_expression(expr, value) is expected


# ----------------------------------------------------------------------
# Rule evaluation
# ----------------------------------------------------------------------


RULE_AGE_GOV = {
    "decision": "permit",
    "issuers": [GOV],
    "conditions": [{"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"}],
}


def _rule(data):
    policy = parse_policy(
        canonical_json(
            {"policy_id": "r", "combining": "permit-overrides", "rules": [data]}
        )
    )
    return policy.rules[0]


def test_rule_permits_matching_triple():
    trace = evaluate_rule(_rule(RULE_AGE_GOV), _triples((GOV, "age", "25")))
    assert trace.outcome == "permit"
    assert trace.matched_bindings["claims.age"] == [
        {"issuer_did": GOV, "name": "age", "value": "25"}
    ]


def test_rule_issuer_binding_not_applicable():
    trace = evaluate_rule(_rule(RULE_AGE_GOV), _triples((OTHER, "age", "25")))
    assert trace.outcome == "not-applicable"
    assert trace.unmatched == ["claims.age"]


def test_rule_conjunction_over_conditions():
    rule = _rule(
        {
            "decision": "permit",
            "issuers": [],
            "conditions": [
                {"attr": "claims.age", "fn": ">=", "value": 18, "type": "int"},
                {"attr": "claims.degree", "fn": "==", "value": "PhD", "type": "string"},
            ],
        }
    )
    trace = evaluate_rule(rule, _triples((GOV, "age", "25")))
    assert trace.outcome == "not-applicable"
    both = _triples((GOV, "age", "25"), (OTHER, "degree", "PhD"))
    assert evaluate_rule(rule, both).outcome == "permit"


def test_rule_empty_issuers_accepts_any():
    rule = _rule(dict(RULE_AGE_GOV, issuers=[]))
    assert evaluate_rule(rule, _triples((OTHER, "age", "30"))).outcome == "permit"


# ----------------------------------------------------------------------
# Policy combination
# ----------------------------------------------------------------------


def test_zero_applicable_rules_is_not_applicable():
    policy = parse_policy(canonical_json(MINIMAL))
    decision = evaluate_policy(policy, _triples())
    assert decision.outcome == "NotApplicable"
    assert decision.trace[0].outcome == "not-applicable"


# Outcome-forcing rules: a matching permit rule, a matching deny rule,
# and a rule whose condition cannot match.
FORCED = {
    "permit": {
        "decision": "permit",
        "issuers": [],
        "conditions": [{"attr": "claims.x", "fn": "==", "value": "1", "type": "string"}],
    },
    "deny": {
        "decision": "deny",
        "issuers": [],
        "conditions": [{"attr": "claims.x", "fn": "==", "value": "1", "type": "string"}],
    },
    "not-applicable": {
        "decision": "permit",
        "issuers": [],
        "conditions": [{"attr": "claims.x", "fn": "==", "value": "2", "type": "string"}],
    },
}

# Derived combining truth table over all 9 two-rule outcome pairs.
PAIRS = list(itertools.product(["permit", "deny", "not-applicable"], repeat=2))


def _expected_combined(combining, outcomes):
    if combining == "permit-overrides":
        if "permit" in outcomes:
            return "Permit"
        if "deny" in outcomes:
            return "Deny"
        return "NotApplicable"
    if combining == "deny-overrides":
        if "deny" in outcomes:
            return "Deny"
        if "permit" in outcomes:
            return "Permit"
        return "NotApplicable"
    for outcome in outcomes:
        if outcome != "not-applicable":
            return "Permit" if outcome == "permit" else "Deny"
    return "NotApplicable"


@pytest.mark.parametrize("combining",
                         ["permit-overrides", "deny-overrides", "first-applicable"])
def test_two_rule_combining_truth_table(combining):
    triples = _triples((GOV, "x", "1"))
    for first, second in PAIRS:
        policy = parse_policy(
            canonical_json(
                {
                    "policy_id": "t",
                    "combining": combining,
                    "rules": [FORCED[first], FORCED[second]],
                }
            )
        )
        decision = evaluate_policy(policy, triples)
        assert [t.outcome for t in decision.trace] == [first, second]
        assert decision.outcome == _expected_combined(combining, (first, second))


def test_first_applicable_skips_not_applicable():
    policy = parse_policy(
        canonical_json(
            {
                "policy_id": "t",
                "combining": "first-applicable",
                "rules": [FORCED["not-applicable"], FORCED["deny"], FORCED["permit"]],
            }
        )
    )
    assert evaluate_policy(policy, _triples((GOV, "x", "1"))).outcome == "Deny"


def test_decision_trace_roundtrip():
    policy = parse_policy(canonical_json(MINIMAL))
    decision = evaluate_policy(policy, _triples((GOV, "age", "44")))
    assert Decision.from_dict(decision.to_dict()).to_dict() == decision.to_dict()


# ----------------------------------------------------------------------
# Oracle equivalence and algebraic properties
# ----------------------------------------------------------------------


def _engine_outcome(policy_dict, raw_triples) -> str:
    policy = parse_policy(canonical_json(policy_dict))
    attrs = _triples(*raw_triples)
    return evaluate_policy(policy, attrs).outcome


def test_oracle_equivalence_sample():
    rng = random.Random(1234)
    for _ in range(300):
        policy_dict = vppl_oracle.random_policy(rng)
        raw = vppl_oracle.random_triples(rng)
        assert _engine_outcome(policy_dict, raw) == vppl_oracle.oracle_policy_outcome(
            policy_dict, raw
        )


def test_rule_order_invariance_for_override_algorithms():
    rng = random.Random(99)
    for _ in range(150):
        for combining in ("permit-overrides", "deny-overrides"):
            policy_dict = vppl_oracle.random_policy(rng, combining=combining)
            raw = vppl_oracle.random_triples(rng)
            base = _engine_outcome(policy_dict, raw)
            shuffled = dict(policy_dict)
            rules = list(policy_dict["rules"])
            rng.shuffle(rules)
            shuffled["rules"] = rules
            assert _engine_outcome(shuffled, raw) == base


def test_permit_overrides_monotone_under_added_matches():
    rng = random.Random(4242)
    for _ in range(150):
        policy_dict = vppl_oracle.random_policy(rng, combining="permit-overrides")
        raw = vppl_oracle.random_triples(rng)
        if _engine_outcome(policy_dict, raw) != "Permit":
            continue
        extended = raw + vppl_oracle.random_triples(rng)
        assert _engine_outcome(policy_dict, extended) == "Permit"
