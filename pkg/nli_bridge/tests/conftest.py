import json

import pytest
from fastapi.testclient import TestClient

from nli_bridge import ServiceConfig, create_app, schema_dir

try:
    import jsonschema
except ImportError:
    jsonschema = None


@pytest.fixture(scope="session")
def schemas() -> dict:
    return {
        path.stem: json.loads(path.read_text(encoding="utf-8"))
        for path in schema_dir().glob("*.json")
    }


@pytest.fixture
def config() -> ServiceConfig:
    return ServiceConfig(max_batch=64)


@pytest.fixture
def client(config):
    with TestClient(create_app(config)) as client:
        yield client


@pytest.fixture(scope="session")
def assert_valid(schemas):
    def check(name: str, payload: dict) -> None:
        if jsonschema is None:
            pytest.skip("jsonschema is not installed")
        jsonschema.validate(payload, schemas[name])

    return check
