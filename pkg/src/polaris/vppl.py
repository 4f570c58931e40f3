"""Policy language for verified presentations: model, parsing, signing,
and the decision engine.

A policy is a flat list of rules; each rule is a conjunction of atomic
attribute expressions plus an issuer allow-list and a permit/deny decision.
There is deliberately no nested boolean syntax: complex logic is expressed
through multiple rules and the combining algorithm.

Rule matching follows three clauses per expression: the attribute name must
match the expression path's terminal segment, the disclosed value must
satisfy the comparison after coercion to the declared type, and the triple's
issuer must be in the rule's allow-list (an empty list accepts any
registered issuer).  Coercion failures evaluate to false rather than
raising, so policy evaluation is total.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from . import crypto
from .encoding import b64decode, b64encode, canonical_json
from .errors import (
    InvalidDid,
    InvalidInput,
    PolicySchemaError,
    PolicySyntaxError,
)
from .presentation import VerifiedAttributes, VerifiedTriple
from .vdr import VdrClient, parse_did

VALUE_TYPES = ("string", "int", "bool")
FUNCTIONS = ("==", "!=", ">=", "<=", ">", "<", "in", "contains")
ORDERING_FUNCTIONS = (">=", "<=", ">", "<")
COMBINING_ALGORITHMS = ("permit-overrides", "deny-overrides", "first-applicable")

ATTRIBUTE_PREFIX = "claims."

PERMIT = "permit"
DENY = "deny"
NOT_APPLICABLE = "not-applicable"

_INT_PATTERN = re.compile(r"^-?[0-9]+$")

Literal = Union[str, int, bool, list]


@dataclass(frozen=True)
class Expression:
    """Atomic predicate over one attribute path."""

    attribute_path: str
    function: str
    target_value: Literal
    value_type: str

    @property
    def terminal_name(self) -> str:
        return self.attribute_path.rsplit(".", 1)[-1]

    def to_dict(self) -> dict:
        return {
            "attr": self.attribute_path,
            "fn": self.function,
            "value": self.target_value,
            "type": self.value_type,
        }


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Expression, ...]
    issuers: tuple[str, ...]
    decision: str

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "issuers": list(self.issuers),
            "conditions": [c.to_dict() for c in self.conditions],
        }


@dataclass(frozen=True)
class PolicySignature:
    signer_did: str
    value: bytes

    def to_dict(self) -> dict:
        return {"signer_did": self.signer_did, "value": b64encode(self.value)}


@dataclass(frozen=True)
class Policy:
    policy_id: str
    rules: tuple[Rule, ...]
    combining: str
    signature: Optional[PolicySignature] = None

    def to_dict(self, include_signature: bool = True) -> dict:
        data = {
            "policy_id": self.policy_id,
            "combining": self.combining,
            "rules": [r.to_dict() for r in self.rules],
        }
        if include_signature and self.signature is not None:
            data["signature"] = self.signature.to_dict()
        return data


@dataclass
class RuleTrace:
    """Per-rule evaluation record feeding the decision trace."""

    rule_index: int
    outcome: str
    matched_bindings: dict[str, list[dict]] = field(default_factory=dict)
    unmatched: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rule_index": self.rule_index,
            "outcome": self.outcome,
            "matched_bindings": self.matched_bindings,
            "unmatched": self.unmatched,
        }


@dataclass
class Decision:
    outcome: str  # "Permit" | "Deny" | "NotApplicable"
    trace: list[RuleTrace] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "trace": [t.to_dict() for t in self.trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Decision":
        return cls(
            outcome=data["outcome"],
            trace=[
                RuleTrace(
                    rule_index=t["rule_index"],
                    outcome=t["outcome"],
                    matched_bindings=t.get("matched_bindings", {}),
                    unmatched=t.get("unmatched", []),
                )
                for t in data.get("trace", [])
            ],
        )


# ----------------------------------------------------------------------
# Parsing and serialization
# ----------------------------------------------------------------------


def _schema_error(path: str, message: str) -> PolicySchemaError:
    return PolicySchemaError(message, path=path)


def _check_expression(data, path: str) -> Expression:
    if not isinstance(data, dict):
        raise _schema_error(path, "expression must be an object")
    for key in ("attr", "fn", "value", "type"):
        if key not in data:
            raise _schema_error(path, f"missing field {key!r}")
    attr = data["attr"]
    fn = data["fn"]
    value = data["value"]
    value_type = data["type"]
    if not isinstance(attr, str) or not attr.startswith(ATTRIBUTE_PREFIX) \
            or len(attr) <= len(ATTRIBUTE_PREFIX):
        raise _schema_error(
            f"{path}.attr", f"attribute path must look like 'claims.<name>', got {attr!r}"
        )
    if fn not in FUNCTIONS:
        raise _schema_error(f"{path}.fn", f"unknown function {fn!r}")
    if value_type not in VALUE_TYPES:
        raise _schema_error(f"{path}.type", f"unknown value type {value_type!r}")
    if fn in ORDERING_FUNCTIONS and value_type != "int":
        raise _schema_error(
            f"{path}.fn", f"ordering function {fn!r} requires type 'int', got {value_type!r}"
        )
    if fn == "contains" and value_type != "string":
        raise _schema_error(
            f"{path}.fn", "'contains' requires type 'string'"
        )

    def check_scalar(v, where: str) -> None:
        if value_type == "string" and not isinstance(v, str):
            raise _schema_error(where, "target must be a string")
        if value_type == "int" and (isinstance(v, bool) or not isinstance(v, int)):
            raise _schema_error(where, "target must be an integer")
        if value_type == "bool" and not isinstance(v, bool):
            raise _schema_error(where, "target must be a boolean")

    if fn == "in":
        if not isinstance(value, list) or not value:
            raise _schema_error(f"{path}.value", "'in' requires a nonempty list target")
        for i, element in enumerate(value):
            check_scalar(element, f"{path}.value[{i}]")
    else:
        if isinstance(value, list):
            raise _schema_error(f"{path}.value", f"{fn!r} requires a scalar target")
        check_scalar(value, f"{path}.value")
    return Expression(
        attribute_path=attr, function=fn, target_value=value, value_type=value_type
    )


def _check_rule(data, path: str) -> Rule:
    if not isinstance(data, dict):
        raise _schema_error(path, "rule must be an object")
    decision = data.get("decision")
    if decision not in (PERMIT, DENY):
        raise _schema_error(f"{path}.decision", f"decision must be permit or deny, got {decision!r}")
    issuers = data.get("issuers")
    if not isinstance(issuers, list):
        raise _schema_error(f"{path}.issuers", "issuers must be a list (may be empty)")
    for i, issuer in enumerate(issuers):
        try:
            parse_did(issuer)
        except InvalidDid as exc:
            raise _schema_error(f"{path}.issuers[{i}]", str(exc)) from exc
    conditions = data.get("conditions")
    if not isinstance(conditions, list) or not conditions:
        raise _schema_error(f"{path}.conditions", "conditions must be a nonempty list")
    expressions = tuple(
        _check_expression(c, f"{path}.conditions[{i}]") for i, c in enumerate(conditions)
    )
    return Rule(conditions=expressions, issuers=tuple(issuers), decision=decision)


def parse_policy(text: Union[bytes, str]) -> Policy:
    """Parse and validate a policy document.

    JSON syntax errors carry the reported position; schema violations carry
    the offending field path.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicySyntaxError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    if not isinstance(data, dict):
        raise _schema_error("$", "policy must be a JSON object")
    policy_id = data.get("policy_id")
    if not isinstance(policy_id, str) or not policy_id:
        raise _schema_error("policy_id", "policy_id must be a nonempty string")
    combining = data.get("combining")
    if combining not in COMBINING_ALGORITHMS:
        raise _schema_error(
            "combining",
            f"combining must be one of {list(COMBINING_ALGORITHMS)}, got {combining!r}",
        )
    rules_data = data.get("rules")
    if not isinstance(rules_data, list) or not rules_data:
        raise _schema_error("rules", "rules must be a nonempty list")
    rules = tuple(_check_rule(r, f"rules[{i}]") for i, r in enumerate(rules_data))
    signature = None
    if "signature" in data and data["signature"] is not None:
        sig_data = data["signature"]
        if not isinstance(sig_data, dict) or "signer_did" not in sig_data \
                or "value" not in sig_data:
            raise _schema_error("signature", "signature needs signer_did and value")
        try:
            parse_did(sig_data["signer_did"])
        except InvalidDid as exc:
            raise _schema_error("signature.signer_did", str(exc)) from exc
        signature = PolicySignature(
            signer_did=sig_data["signer_did"],
            value=b64decode(sig_data["value"], what="signature.value"),
        )
    unknown = set(data) - {"policy_id", "combining", "rules", "signature"}
    if unknown:
        raise _schema_error("$", f"unknown fields: {sorted(unknown)}")
    return Policy(policy_id=policy_id, rules=rules, combining=combining, signature=signature)


def serialize_policy(policy: Policy) -> bytes:
    """Canonical byte form; serialize/parse/serialize is a fixpoint."""
    return canonical_json(policy.to_dict())


def policy_signing_bytes(policy: Policy) -> bytes:
    """The signed byte range: canonical form without the signature field."""
    return canonical_json(policy.to_dict(include_signature=False))


def sign_policy(policy: Policy, signer_did: str, private_key: bytes) -> Policy:
    parse_did(signer_did)
    signature = PolicySignature(
        signer_did=signer_did,
        value=crypto.sign(policy_signing_bytes(policy), private_key),
    )
    return replace(policy, signature=signature)


UNSIGNED = "unsigned"
VALID = "valid"
INVALID = "invalid"


def verify_policy_signature(policy: Policy, registry: VdrClient) -> str:
    """Returns 'valid', 'invalid', or 'unsigned'.

    Signer resolution failures (unknown DID, transport) raise; they are not
    an 'invalid' verdict.
    """
    if policy.signature is None:
        return UNSIGNED
    document = registry.resolve(policy.signature.signer_did)
    try:
        ok = crypto.verify(
            policy_signing_bytes(policy), policy.signature.value, document.public_key
        )
    except InvalidInput:
        return INVALID
    return VALID if ok else INVALID


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------


def _coerce(value: str, value_type: str):
    """Coerce disclosed text to the declared type; None means failure."""
    if value_type == "string":
        return value
    if value_type == "int":
        if isinstance(value, str) and _INT_PATTERN.match(value):
            return int(value)
        return None
    if value_type == "bool":
        if value == "true":
            return True
        if value == "false":
            return False
        return None
    return None


def evaluate_expression(expr: Expression, value: str) -> bool:
    """Total predicate: coercion failure is false, never an error."""
    coerced = _coerce(value, expr.value_type)
    if coerced is None:
        return False
    fn = expr.function
    target = expr.target_value
    if fn == "==":
        return coerced == target
    if fn == "!=":
        return coerced != target
    if fn == "in":
        return coerced in target
    if fn == "contains":
        return target in coerced
    if fn == ">=":
        return coerced >= target
    if fn == "<=":
        return coerced <= target
    if fn == ">":
        return coerced > target
    if fn == "<":
        return coerced < target
    raise InvalidInput(f"unknown function {fn!r}")


def _issuer_allowed(rule: Rule, issuer_did: str) -> bool:
    return not rule.issuers or issuer_did in rule.issuers


def evaluate_rule(
    rule: Rule,
    attrs: Union[VerifiedAttributes, Sequence[VerifiedTriple]],
    rule_index: int = 0,
) -> RuleTrace:
    """A rule applies iff every condition has at least one satisfying triple
    from an allowed issuer; otherwise it is not-applicable."""
    triples = attrs.triples if isinstance(attrs, VerifiedAttributes) else list(attrs)
    trace = RuleTrace(rule_index=rule_index, outcome=NOT_APPLICABLE)
    all_satisfied = True
    for expr in rule.conditions:
        matches = [
            {"issuer_did": t.issuer_did, "name": t.name, "value": t.value}
            for t in triples
            if t.name == expr.terminal_name
            and _issuer_allowed(rule, t.issuer_did)
            and evaluate_expression(expr, t.value)
        ]
        if matches:
            trace.matched_bindings[expr.attribute_path] = matches
        else:
            trace.unmatched.append(expr.attribute_path)
            all_satisfied = False
    if all_satisfied:
        trace.outcome = rule.decision
    else:
        trace.matched_bindings = {}
    return trace


def _combine(combining: str, outcomes: Sequence[str]) -> str:
    if combining == "permit-overrides":
        if PERMIT in outcomes:
            return "Permit"
        if DENY in outcomes:
            return "Deny"
        return "NotApplicable"
    if combining == "deny-overrides":
        if DENY in outcomes:
            return "Deny"
        if PERMIT in outcomes:
            return "Permit"
        return "NotApplicable"
    if combining == "first-applicable":
        for outcome in outcomes:
            if outcome != NOT_APPLICABLE:
                return "Permit" if outcome == PERMIT else "Deny"
        return "NotApplicable"
    raise InvalidInput(f"unknown combining algorithm {combining!r}")


def evaluate_policy(
    policy: Policy,
    attrs: Union[VerifiedAttributes, Sequence[VerifiedTriple]],
) -> Decision:
    """Evaluate every rule and combine the outcomes; returns the full trace."""
    traces = [
        evaluate_rule(rule, attrs, rule_index=i) for i, rule in enumerate(policy.rules)
    ]
    outcome = _combine(policy.combining, [t.outcome for t in traces])
    return Decision(outcome=outcome, trace=traces)
