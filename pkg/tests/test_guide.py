import json
import math

import numpy as np
import pytest

from gsscene import (
    LLMEndpoint,
    generate_guide,
    parse_guide,
    serialize_guide,
    validate_guide,
)
from gsscene.errors import (
    InvariantViolation,
    MalformedDocument,
    ResponseNotParseable,
    SchemaViolation,
)
from gsscene.guide import ObjectTransform, with_transform

from conftest import fixture_path

MINIMAL = {
    "scene_prompt": "a rock",
    "objects": [
        {
            "id": "rock",
            "cls": "rock",
            "prompt": "a gray rock",
            "init": {"method": "sphere-surface", "count": 10, "base_color": [0.5, 0.5, 0.5]},
            "transform": {"xyz": [0, 0, 0], "whl": [1, 1, 1], "quad": [1, 0, 0, 0]},
        }
    ],
}


def test_minimal_document_parses():
    guide = parse_guide(json.dumps(MINIMAL))
    assert len(guide.objects) == 1
    assert guide.objects[0].transform.quad == (1.0, 0.0, 0.0, 0.0)
    assert validate_guide(guide) == []


def test_quad_renormalized_within_band():
    doc = json.loads(json.dumps(MINIMAL))
    doc["objects"][0]["transform"]["quad"] = [0.9995, 0.0, 0.0, 0.0316]
    norm = math.sqrt(0.9995**2 + 0.0316**2)
    assert abs(norm - 1.0) <= 1e-2  # inside the renormalization band
    guide = parse_guide(json.dumps(doc))
    quad = guide.objects[0].transform.quad
    assert abs(math.sqrt(sum(v * v for v in quad)) - 1.0) < 1e-12
    assert quad[0] == pytest.approx(0.9995 / norm)


def test_quad_rejected_beyond_band():
    doc = json.loads(json.dumps(MINIMAL))
    doc["objects"][0]["transform"]["quad"] = [1.2, 0.0, 0.0, 0.0]
    with pytest.raises(InvariantViolation):
        parse_guide(json.dumps(doc))


def test_duplicate_id_names_offender():
    with open(fixture_path("duplicate_id.json")) as fh:
        with pytest.raises(InvariantViolation, match="tree"):
            parse_guide(fh.read())


def test_defaults_from_design_decisions():
    guide = parse_guide(json.dumps(MINIMAL))
    assert guide.loss_weights == (1.0, 10.0, 1.0)
    # theta defaults to 0.05 * mean of all whl components
    assert guide.collision_threshold == pytest.approx(0.05 * 1.0)


def test_not_json_is_malformed():
    with pytest.raises(MalformedDocument):
        parse_guide("this is not json {")


def test_schema_violation_carries_path():
    doc = json.loads(json.dumps(MINIMAL))
    del doc["objects"][0]["transform"]["whl"]
    with pytest.raises(SchemaViolation) as err:
        parse_guide(json.dumps(doc))
    assert "objects[0].transform.whl" in str(err.value)


def test_wrong_type_is_schema_violation():
    doc = json.loads(json.dumps(MINIMAL))
    doc["objects"][0]["init"]["count"] = "ten"
    with pytest.raises(SchemaViolation, match="count"):
        parse_guide(json.dumps(doc))


def test_validate_flags_bad_values():
    guide = parse_guide(json.dumps(MINIMAL))
    bad = with_transform(
        guide, "rock", ObjectTransform(xyz=(0, 0, 0), whl=(0.0, 1.0, 1.0), quad=(1, 0, 0, 0))
    )
    violations = validate_guide(bad)
    assert len(violations) == 1
    assert violations[0].object_id == "rock"
    assert violations[0].field == "whl"


def test_validate_flags_negative_threshold():
    import dataclasses

    guide = parse_guide(json.dumps(MINIMAL))
    bad = dataclasses.replace(guide, collision_threshold=-0.1)
    violations = validate_guide(bad)
    assert [v.field for v in violations] == ["collision_threshold"]


def test_external_file_requires_path():
    doc = json.loads(json.dumps(MINIMAL))
    doc["objects"][0]["init"]["method"] = "external-file"
    with pytest.raises(InvariantViolation, match="path"):
        parse_guide(json.dumps(doc))


def test_round_trip_is_identity(rng):
    for seed in range(20):
        local = np.random.default_rng(seed)
        n = int(local.integers(1, 5))
        doc = {
            "scene_prompt": f"scene {seed}",
            "collision_threshold": float(local.uniform(0.01, 1.0)),
            "loss_weights": [float(v) for v in local.uniform(0, 5, 3)],
            "objects": [],
        }
        for i in range(n):
            quad = local.normal(size=4)
            quad /= np.linalg.norm(quad)
            doc["objects"].append(
                {
                    "id": f"obj_{i}",
                    "cls": "thing",
                    "prompt": "something",
                    "pervasive": bool(local.integers(2)),
                    "init": {
                        "method": "uniform-box",
                        "count": int(local.integers(1, 100)),
                        "base_color": [float(v) for v in local.uniform(0, 1, 3)],
                    },
                    "transform": {
                        "xyz": [float(v) for v in local.normal(size=3)],
                        "whl": [float(v) for v in local.uniform(0.1, 3, 3)],
                        "quad": [float(v) for v in quad],
                    },
                }
            )
        guide = parse_guide(json.dumps(doc))
        assert parse_guide(serialize_guide(guide)) == guide
        assert validate_guide(guide) == []


ENDPOINT = LLMEndpoint(base_url="http://example.invalid", model="planner-1", retries=2)


def test_generate_guide_from_fixture():
    with open(fixture_path("llm_response_valid.txt")) as fh:
        content = fh.read()
    calls = []

    def transport(messages):
        calls.append(messages)
        return content

    guide = generate_guide("a campfire scene", ENDPOINT, transport=transport)
    assert len(guide.objects) == 3
    assert [o.pervasive for o in guide.objects] == [False, False, True]
    assert len(calls) == 1
    assert validate_guide(guide) == []


def test_generate_guide_prose_exhausts_retries(tmp_path):
    with open(fixture_path("llm_response_prose.txt")) as fh:
        content = fh.read()
    calls = []

    def transport(messages):
        calls.append(messages)
        return content

    with pytest.raises(ResponseNotParseable):
        generate_guide("a scene", ENDPOINT, transport=transport, audit_dir=tmp_path)
    assert len(calls) == ENDPOINT.retries + 1
    # reprompts grow the conversation and raw replies are persisted
    assert len(calls[-1]) > len(calls[0])
    assert (tmp_path / "llm_response_0.txt").exists()
    assert (tmp_path / "llm_response_2.txt").exists()


def test_generate_guide_empty_prompt_never_calls_endpoint():
    def transport(messages):
        raise AssertionError("transport must not be reached")

    with pytest.raises(ValueError):
        generate_guide("", ENDPOINT, transport=transport)


def test_generate_guide_propagates_invariant_violation():
    doc = json.loads(json.dumps(MINIMAL))
    doc["objects"].append(doc["objects"][0])  # duplicate id
    calls = []

    def transport(messages):
        calls.append(messages)
        return json.dumps(doc)

    with pytest.raises(InvariantViolation):
        generate_guide("a scene", ENDPOINT, transport=transport)
    assert len(calls) == 1  # invariant failures do not reprompt
