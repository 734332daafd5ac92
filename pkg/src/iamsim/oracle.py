"""Reference authorizer for differential testing.

Re-derives every decision from scratch: patterns are expanded to regular
expressions, permission-set resolution is a direct scan over assignments
and group memberships, and the allow/deny rules are restated independently.
Nothing here calls the engine's matchers or resolution helpers, so a bug
must be introduced twice, in different shapes, to escape the differential
tests that compare the two.

Intended for the test suite; the engine is the production path.
"""

from __future__ import annotations

import re

from .engine import AccessRequest
from .org import Organization
from .policy import Effect, Statement


def _glob_regex(pattern: str) -> "re.Pattern[str]":
    return re.compile("".join(".*" if ch == "*" else re.escape(ch) for ch in pattern))


def _statement_matches(stmt: Statement, request: AccessRequest, resource_side: bool) -> bool:
    if not any(_glob_regex(p.text).fullmatch(request.action) for p in stmt.actions):
        return False
    if not any(_glob_regex(p.pattern).fullmatch(request.resource) for p in stmt.resources):
        return False
    for operator, keys in stmt.condition.clauses.items():
        for key, values in keys.items():
            actual = request.context.get(key)
            if actual is None:
                return False
            if operator == "StringEquals":
                if not any(actual == v for v in values):
                    return False
            elif operator == "StringLike":
                if not any(_glob_regex(v).fullmatch(actual) for v in values):
                    return False
            else:
                raise AssertionError(f"operator {operator} outside the grammar")
    if resource_side:
        principals = stmt.principals or ()
        if request.user not in principals and request.account not in principals:
            return False
    return True


def oracle_authorize(org: Organization, request: AccessRequest) -> str:
    """Decide a request independently of the engine; returns "Allow"/"Deny"."""
    if "*" in request.action or "*" in request.resource or not request.resource:
        raise ValueError(f"request must be concrete: {request.action} {request.resource}")
    member_of = set()
    for user in org.users:
        if user.id == request.user:
            member_of = set(user.groups)
            break
    else:
        raise LookupError(f"unknown user: {request.user}")
    if not any(request.account == acct.id for ou in org.root.walk() for acct in ou.accounts):
        raise LookupError(f"unknown account: {request.account}")

    ps_ids = set()
    for assignment in org.assignments:
        if assignment.account != request.account:
            continue
        if assignment.subject_kind == "user" and assignment.subject == request.user:
            ps_ids.add(assignment.permission_set)
        if assignment.subject_kind == "group" and assignment.subject in member_of:
            ps_ids.add(assignment.permission_set)

    identity_statements = []
    for ps in org.permission_sets:
        if ps.id in ps_ids:
            for policy in ps.policies:
                identity_statements.extend(policy.statements)

    owner = request.account
    resource_statements: list[Statement] = []
    for resource in org.resources:
        if resource.arn == request.resource:
            owner = resource.owner_account
            if resource.resource_policy is not None:
                resource_statements = list(resource.resource_policy.statements)
            break

    identity_matched = [
        s for s in identity_statements if _statement_matches(s, request, resource_side=False)
    ]
    resource_matched = [
        s for s in resource_statements if _statement_matches(s, request, resource_side=True)
    ]

    if any(s.effect is Effect.DENY for s in identity_matched + resource_matched):
        return "Deny"
    identity_allow = any(s.effect is Effect.ALLOW for s in identity_matched)
    resource_allow = any(s.effect is Effect.ALLOW for s in resource_matched)
    if request.account == owner:
        return "Allow" if (identity_allow or resource_allow) else "Deny"
    shared = any(
        share.resource == request.resource and request.account in share.shared_with
        for share in org.shares
    )
    if identity_allow and (resource_allow or shared):
        return "Allow"
    return "Deny"
