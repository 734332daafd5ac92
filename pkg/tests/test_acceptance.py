"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every tolerance is pinned here (exact equality unless stated).
"""

import dataclasses
import json
import os
import random
import subprocess
import sys
from datetime import timedelta

from iamsim import (
    AccessRequest,
    ActionLevel,
    Effect,
    EventKind,
    QueryFilter,
    Reason,
    Statement,
    Verdict,
    archive_from_events,
    authorize,
    build_org,
    build_usage_index,
    classify_action_level,
    generalize_action,
    generate_least_privilege,
    load_scenario,
    merge_archives,
    oracle_authorize,
    parse_policy,
    query,
    read_archive,
    serialize_policy,
    simulate,
    unused_report,
    write_archive,
)
from iamsim.cli import main as cli_main
from iamsim.engine import SIMULATION_EPOCH, decision_to_obj
from iamsim.org import Assignment, PermissionSet
from iamsim.policy import ActionPattern, PolicyDocument, ResourcePattern

from conftest import BOOKS_TABLE_ARN, BOOKS_TABLE_POLICY, utc
from generators import (
    activity_universe,
    exhaustive_universes,
    random_concrete_action,
    random_org,
    random_request,
)
from test_audit import random_archive
from test_usage import api_event, report_scenario


def _pass(n: int, text: str) -> None:
    print(f"ACCEPTANCE {n}: PASS - {text}")


def test_criterion_1_figure_decision_table(sharing_scenario_path):
    expected = [
        (Verdict.ALLOW, Reason.SAME_ACCOUNT_ALLOW),
        (Verdict.DENY, Reason.IMPLICIT_DENY),
        (Verdict.ALLOW, Reason.CROSS_ACCOUNT_ALLOW),
    ]
    renders = []
    for _ in range(2):  # independent org builds must be byte-stable
        org = load_scenario(sharing_scenario_path)
        requests = [
            AccessRequest(user=f"user-{i}", account=acct,
                          action="s3:GetObject", resource="arn:aws:s3:::bucket-s")
            for i, acct in ((1, "111111111111"), (2, "222222222222"), (3, "333333333333"))
        ]
        decisions = [authorize(org, r) for r in requests]
        assert [(d.verdict, d.reason) for d in decisions] == expected
        renders.append(json.dumps(
            [decision_to_obj(d, include_trace=True) for d in decisions],
            separators=(",", ":"),
        ))
    assert renders[0] == renders[1]

    # fresh interpreters with different hash seeds must agree byte for byte
    src = str(sharing_scenario_path.parent.parent / "src")
    outputs = []
    for hashseed in ("13", "9973"):
        proc = subprocess.run(
            [sys.executable, "-m", "iamsim.cli",
             "--scenario", str(sharing_scenario_path), "--format", "json",
             "authorize", "--user", "user-3", "--account", "333333333333",
             "--action", "s3:GetObject", "--resource", "arn:aws:s3:::bucket-s",
             "--explain"],
            capture_output=True,
            env={**os.environ, "PYTHONHASHSEED": hashseed,
                 "PYTHONPATH": src + os.pathsep + os.environ.get("PYTHONPATH", "")},
        )
        assert proc.returncode == 0
        outputs.append(proc.stdout)
    assert outputs[0] == outputs[1]
    _pass(1, "same/cross-account decision table with byte-stable traces")


def test_criterion_2_policy_text_fidelity(books_scenario):
    doc = parse_policy(BOOKS_TABLE_POLICY)
    text = serialize_policy(doc)
    assert parse_policy(text) == doc
    assert serialize_policy(parse_policy(text)) == text  # fixed point

    org = build_org(books_scenario)
    allowed = authorize(org, AccessRequest(
        user="reader", account="123456789012",
        action="dynamodb:PutItem", resource=BOOKS_TABLE_ARN,
    ))
    assert allowed.verdict is Verdict.ALLOW
    for other_arn in (
        BOOKS_TABLE_ARN.replace("Books", "Films"),
        "arn:aws:dynamodb:ap-northeast-2:123456789012:table/Books2",
        "arn:aws:s3:::books-export",
    ):
        denied = authorize(org, AccessRequest(
            user="reader", account="123456789012",
            action="dynamodb:PutItem", resource=other_arn,
        ))
        assert denied.verdict is Verdict.DENY
    _pass(2, "policy text parse/serialize fixed point and table-scoped grant")


def test_criterion_3_action_hierarchy():
    assert classify_action_level("*:*") is ActionLevel.FULL
    assert classify_action_level("s3:*") is ActionLevel.SERVICE
    assert classify_action_level("s3:Get*") is ActionLevel.VERB
    assert classify_action_level("s3:PutObject") is ActionLevel.EXACT

    rng = random.Random(20240301)
    fallbacks = 0
    for _ in range(1000):
        action = random_concrete_action(rng)
        fell_back = False
        for level in (2, 3, 4):
            got = generalize_action(action, level)
            if got.fallback:
                fell_back = True
                continue
            assert classify_action_level(got.pattern) == ActionLevel(level)
        if fell_back:
            fallbacks += 1
    assert fallbacks / 1000 < 0.05
    _pass(3, f"four-level ladder coherent on 1000 actions ({fallbacks} fallbacks)")


def test_criterion_4_differential_oracle():
    comparisons = 0
    for org, requests in exhaustive_universes():
        for request in requests:
            assert authorize(org, request).verdict.value == oracle_authorize(org, request)
            comparisons += 1
    exhaustive = comparisons

    rng = random.Random(20240402)
    while comparisons - exhaustive < 10_000:
        org = random_org(rng, n_accounts=rng.randint(2, 4), n_users=rng.randint(2, 5),
                         n_permission_sets=rng.randint(1, 4))
        for _ in range(80):
            request = random_request(rng, org)
            assert authorize(org, request).verdict.value == oracle_authorize(org, request)
            comparisons += 1
    _pass(4, f"engine equals oracle on {comparisons} requests "
             f"({exhaustive} exhaustive, {comparisons - exhaustive} random)")


def test_criterion_5_deny_dominance_and_monotonicity():
    rng = random.Random(20240503)

    dominance = 0
    for _ in range(1000):
        org = random_org(rng)
        request = random_request(rng, org)
        deny = Statement(
            effect=Effect.DENY,
            actions=(ActionPattern.parse(request.action),),
            resources=(ResourcePattern(request.resource),),
        )
        poisoned = dataclasses.replace(
            org,
            permission_sets=org.permission_sets + (PermissionSet(
                id="zz-deny", policies=(PolicyDocument(statements=(deny,), name="d"),),
            ),),
            assignments=org.assignments + (
                Assignment("user", request.user, request.account, "zz-deny"),
            ),
        )
        decision = authorize(poisoned, request)
        assert decision.verdict is Verdict.DENY
        assert decision.reason is Reason.EXPLICIT_DENY
        dominance += 1

    def mutate(org, stmt, rng):
        if stmt.principals is not None:
            targets = [r for r in org.resources if r.resource_policy is not None]
            if not targets:
                return None
            res = rng.choice(targets)
            policy = dataclasses.replace(
                res.resource_policy,
                statements=res.resource_policy.statements + (stmt,),
            )
            resources = tuple(
                dataclasses.replace(r, resource_policy=policy) if r.arn == res.arn else r
                for r in org.resources
            )
            return dataclasses.replace(org, resources=resources)
        targets = [ps for ps in org.permission_sets if ps.policies]
        if not targets:
            return None
        ps = rng.choice(targets)
        policy = rng.choice(ps.policies)
        grown_policy = dataclasses.replace(policy, statements=policy.statements + (stmt,))
        grown_ps = PermissionSet(
            id=ps.id,
            policies=tuple(grown_policy if p.name == policy.name else p for p in ps.policies),
        )
        sets = tuple(grown_ps if p.id == ps.id else p for p in org.permission_sets)
        return dataclasses.replace(org, permission_sets=sets)

    allow_pairs = deny_pairs = 0
    while allow_pairs < 1000 or deny_pairs < 1000:
        org = random_org(rng)
        requests = [random_request(rng, org) for _ in range(8)]
        before = [authorize(org, r).verdict for r in requests]

        allow = Statement(
            effect=Effect.ALLOW,
            actions=(ActionPattern.parse(rng.choice(["s3:*", "*", "ec2:*", "s3:Get*"])),),
            resources=(ResourcePattern(rng.choice(["*", "arn:aws:s3:::bkt-0*"])),),
            principals=("111111111111",) if rng.random() < 0.3 else None,
        )
        grown = mutate(org, allow, rng)
        if grown is not None:
            after = [authorize(grown, r).verdict for r in requests]
            assert not any(b is Verdict.ALLOW and a is Verdict.DENY
                           for b, a in zip(before, after))
            allow_pairs += len(requests)

        deny = Statement(
            effect=Effect.DENY,
            actions=(ActionPattern.parse(rng.choice(["s3:Delete*", "s3:*", "*"])),),
            resources=(ResourcePattern(rng.choice(["*", "arn:aws:s3:::bkt-1"])),),
            principals=("user00", "111111111111") if rng.random() < 0.3 else None,
        )
        shrunk = mutate(org, deny, rng)
        if shrunk is not None:
            after = [authorize(shrunk, r).verdict for r in requests]
            assert not any(b is Verdict.DENY and a is Verdict.ALLOW
                           for b, a in zip(before, after))
            deny_pairs += len(requests)

    _pass(5, f"deny dominance ({dominance} cases) and verdict monotonicity "
             f"({allow_pairs}+{deny_pairs} pairs)")


def test_criterion_6_least_privilege_replay():
    rng = random.Random(20240604)
    org, requests = activity_universe(rng, n_users=55, n_accounts=8, n_events=2400)
    assert len(requests) >= 2000
    events = []
    simulate(org, requests, sink=events.append)
    index = build_usage_index(org, events)

    window = (SIMULATION_EPOCH, SIMULATION_EPOCH + timedelta(seconds=len(requests)))
    principals = sorted(
        p for p in index.observations if index.observed_in_window(p, window)
    )
    assert len(principals) >= 50

    for principal in principals:
        by_level = {
            level: generate_least_privilege(index, principal, level, window)
            for level in (4, 3, 2)
        }
        for level, generated in by_level.items():
            assert generated.verification.coverage == 1.0, (principal, level)
        assert by_level[4].verification.excess == 0.0, principal
        assert by_level[2].verification.excess >= by_level[3].verification.excess
        assert by_level[3].verification.excess >= by_level[4].verification.excess
    _pass(6, f"replay over {len(principals)} principals, {len(events)} events: "
             f"exact level tight, wider levels monotone")


def test_criterion_7_unused_detection():
    org = build_org(report_scenario())
    as_of = utc(2024, 6, 1)
    events = [api_event(utc(2024, 2, 2), "dev", "acm:RequestCertificate",
                        "arn:aws:acm-cert")]
    week = utc(2024, 3, 7)
    while week <= utc(2024, 5, 30):
        events.append(api_event(week, "dev", "ec2:DescribeInstances", "arn:aws:ec2-i-1"))
        week += timedelta(days=7)
    index = build_usage_index(org, events)
    assert (as_of - index.statement_last_used[("backend", "acm-full", 0)]).days == 120

    entries = unused_report(index, org, as_of, threshold_days=90)
    assert [(e.permission_set, e.policy, e.statement_index) for e in entries] == [
        ("backend", "acm-full", 0),
    ]
    _pass(7, "120-day-stale full-access statement is the only report entry")


def test_criterion_8_audit_conservation_and_round_trip(tmp_path):
    rng = random.Random(20240805)
    for i in range(8):
        parts = [random_archive(rng, rng.randrange(40)) for _ in range(4)]
        merged = merge_archives(parts)
        assert len(merged) == sum(len(p) for p in parts)

        by_verdict = sum(
            len(query(merged, QueryFilter(verdict=v))) for v in Verdict
        )
        assert by_verdict == len(merged)
        by_kind = sum(len(query(merged, QueryFilter(kind=k))) for k in EventKind)
        assert by_kind == len(merged)

        path = tmp_path / f"arch{i}.jsonl"
        write_archive(merged, path)
        assert read_archive(path) == merged
    _pass(8, "merge sizes, query partitions and file round-trips all conserve")


def test_criterion_9_end_to_end_generation(tmp_path, capsys, demo_scenario_path):
    request_objs = [
        {"user": "dana", "account": "200000000001",
         "action": "s3:GetObject", "resource": "arn:aws:s3:::shared-assets"},
        {"user": "dana", "account": "200000000001",
         "action": "s3:PutObject", "resource": "arn:aws:s3:::red-app-assets"},
        {"user": "omar", "account": "200000000001",
         "action": "ec2:StartInstances", "resource": "arn:aws:ec2-i-7"},
        {"user": "dana", "account": "200000000001",
         "action": "s3:ListBucket", "resource": "arn:aws:s3:::shared-assets"},
        {"user": "li", "account": "400000000001",
         "action": "athena:StartQueryExecution", "resource": "arn:aws:athena-wg"},
    ]
    requests_path = tmp_path / "requests.jsonl"
    requests_path.write_text(
        "".join(json.dumps(o) + "\n" for o in request_objs), encoding="utf-8",
    )
    log_path = tmp_path / "activity.jsonl"
    window = "2024-01-01T00:00:00Z..2024-01-01T01:00:00Z"

    assert cli_main([
        "--scenario", str(demo_scenario_path), "simulate", str(requests_path),
        "--out", str(tmp_path / "decisions.jsonl"), "--emit-log", str(log_path),
    ]) == 0
    assert cli_main([
        "--scenario", str(demo_scenario_path), "--format", "json",
        "analyze", "generate", str(log_path),
        "--principal", "dana@200000000001", "--level", "4", "--window", window,
    ]) == 0
    cli_policy = json.loads(capsys.readouterr().out)["policy"]
    cli_text = json.dumps(cli_policy, separators=(",", ":"))

    org = load_scenario(demo_scenario_path)
    events = []
    simulate(org, [AccessRequest(**o) for o in request_objs], sink=events.append)
    index = build_usage_index(org, archive_from_events(events).events)
    generated = generate_least_privilege(
        index, ("dana", "200000000001"), 4,
        (utc(2024, 1, 1, 0), utc(2024, 1, 1, 1)),
    )
    assert cli_text == serialize_policy(generated.document)
    _pass(9, "emitted-log pipeline reproduces in-process policy byte for byte")
