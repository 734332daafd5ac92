import json
from datetime import datetime, timezone
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("thorough", max_examples=300)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# A policy granting any action on one DynamoDB table, in the exact textual
# form the parser must accept.
BOOKS_TABLE_ARN = "arn:aws:dynamodb:ap-northeast-2:123456789012:table/Books"
BOOKS_TABLE_POLICY = """{
  "Version": "2012-10-17",
  "Statement": [
    {
      "Effect": "Allow",
      "Action": "dynamodb:*",
      "Resource": "arn:aws:dynamodb:ap-northeast-2:123456789012:table/Books"
    }
  ]
}"""


def utc(year, month, day, hour=0, minute=0, second=0):
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def demo_scenario_path():
    return SCENARIO_DIR / "demo-org.json"


@pytest.fixture(scope="session")
def sharing_scenario_path():
    return SCENARIO_DIR / "sharing-demo.json"


@pytest.fixture(scope="session")
def demo_org(demo_scenario_path):
    from iamsim import load_scenario

    return load_scenario(demo_scenario_path)


@pytest.fixture(scope="session")
def sharing_org(sharing_scenario_path):
    from iamsim import load_scenario

    return load_scenario(sharing_scenario_path)


@pytest.fixture(scope="session")
def sharing_requests():
    """The three requests against the shared bucket, one per user/account."""
    from iamsim import AccessRequest

    return [
        AccessRequest(user=f"user-{i}", account=account,
                      action="s3:GetObject", resource="arn:aws:s3:::bucket-s")
        for i, account in zip((1, 2, 3), ("111111111111", "222222222222", "333333333333"))
    ]


@pytest.fixture()
def books_scenario():
    """Minimal one-account org whose only grant is the Books table policy."""
    return {
        "organization": {
            "management_account": "123456789012",
            "root": {"name": "Root", "accounts": [{"id": "123456789012", "name": "main"}]},
        },
        "users": [{"id": "reader"}],
        "permission_sets": [
            {
                "id": "books-only",
                "policies": [{"name": "books-any", "document": json.loads(BOOKS_TABLE_POLICY)}],
            }
        ],
        "assignments": [
            {"user": "reader", "account": "123456789012", "permission_set": "books-only"}
        ],
        "resources": [
            {"arn": BOOKS_TABLE_ARN, "owner_account": "123456789012"}
        ],
    }
