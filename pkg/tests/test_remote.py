"""Remote-backend contract against the bundled mock server."""

import pytest

from blockmend import fixtures as fixture_lib
from blockmend import vm as vm_mod
from blockmend.backends import (
    BackendConfig,
    HttpTransport,
    RemoteDiagnosisBackend,
    make_diagnosis_backend,
)
from blockmend.diagnose import FormatViolation, RetryHistory, diagnose
from blockmend.mock_llm import MockLlmServer
from blockmend.normalize import normalize
from blockmend.repair import OracleRepairBackend, RemoteRepairBackend
from blockmend.sb3 import graph_isomorphic
from blockmend.verify import repair_loop


GOOD_DIAGNOSIS = (
    "Bug description: one click fans out to every receiver of the caught message\n"
    "Fix options: A-change count in the clicked script and drop the broadcast, "
    "B-make only one listener change count")

GOOD_INSTRUCTIONS = (
    "Step 1: Cat1 - insert change_variable(count, 1) inside when_clicked\n"
    'Step 2: Cat1 - delete broadcast("cat caught")')

MALFORMED = "I think the bug is probably somewhere in the broadcast logic.\nMaybe.\nOr not."


def fanout_inputs():
    scenario = fixture_lib.get_scenario("broadcast_fanout")
    norm = normalize(fixture_lib.build_fixture("broadcast_fanout")[0])
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    return scenario, norm, trace


def remote_config(url):
    return BackendConfig(endpoint=url, model="mock", timeout=5,
                         keyframe_budget=4, max_format_retries=2)


def test_remote_pipeline_matches_oracle_result():
    scenario, norm, trace = fanout_inputs()
    with MockLlmServer([GOOD_DIAGNOSIS, GOOD_INSTRUCTIONS]) as server:
        config = remote_config(server.url)
        dbackend = RemoteDiagnosisBackend(HttpTransport(config), config)
        diagnosis = dbackend.diagnose(norm, trace, history=RetryHistory())
        assert diagnosis.backend == "remote"
        rbackend = RemoteRepairBackend(HttpTransport(config), diagnosis=diagnosis)
        repaired, _history, pass_at = repair_loop(
            norm, diagnosis, diagnosis.option("A"), [scenario], rbackend, k=5)
        assert pass_at == 1

    oracle_diag = diagnose(norm, trace)
    oracle_repaired, _h, oracle_pass = repair_loop(
        norm, oracle_diag, oracle_diag.option("A"), [scenario],
        OracleRepairBackend(), k=5)
    assert oracle_pass == 1
    assert graph_isomorphic(repaired.project, oracle_repaired.project)


def test_malformed_reply_retries_twice_then_surfaces():
    _scenario, norm, trace = fanout_inputs()
    with MockLlmServer([MALFORMED, MALFORMED, MALFORMED, MALFORMED]) as server:
        config = remote_config(server.url)
        backend = RemoteDiagnosisBackend(HttpTransport(config), config)
        with pytest.raises(FormatViolation):
            backend.diagnose(norm, trace, history=RetryHistory())
        assert server.request_count == 3  # initial ask + exactly 2 re-asks
        # each re-ask carries the violation explanation forward
        parts = server.requests[1]["parts"]
        assert any("Format violation" in p.get("text", "") for p in parts
                   if p["kind"] == "text")


def test_retry_recovers_when_backend_fixes_format():
    _scenario, norm, trace = fanout_inputs()
    with MockLlmServer([MALFORMED, GOOD_DIAGNOSIS]) as server:
        config = remote_config(server.url)
        backend = RemoteDiagnosisBackend(HttpTransport(config), config)
        diagnosis = backend.diagnose(norm, trace, history=RetryHistory())
        assert server.request_count == 2
        assert diagnosis.option("B") is not None


def test_request_carries_frames_and_project():
    _scenario, norm, trace = fanout_inputs()
    with MockLlmServer([GOOD_DIAGNOSIS]) as server:
        config = remote_config(server.url)
        backend = RemoteDiagnosisBackend(HttpTransport(config), config)
        backend.diagnose(norm, trace, history=RetryHistory())
        body = server.requests[0]
        kinds = [p["kind"] for p in body["parts"]]
        assert kinds.count("image_png_b64") == 4
        assert any("Project JSON" in p.get("text", "") for p in body["parts"]
                   if p["kind"] == "text")
        assert body["model"] == "mock"


def test_credential_header_sent_when_configured(monkeypatch):
    monkeypatch.setenv("MOCK_KEY", "hunter2")
    _scenario, norm, trace = fanout_inputs()

    captured = {}

    class RecordingServer(MockLlmServer):
        pass

    with MockLlmServer([GOOD_DIAGNOSIS]) as server:
        config = remote_config(server.url)
        config.credential_env = "MOCK_KEY"
        import urllib.request

        original = urllib.request.urlopen

        def spy(request, timeout=None):
            captured["auth"] = request.headers.get("Authorization")
            return original(request, timeout=timeout)

        monkeypatch.setattr("urllib.request.urlopen", spy)
        backend = RemoteDiagnosisBackend(HttpTransport(config), config)
        backend.diagnose(norm, trace, history=RetryHistory())
    assert captured["auth"] == "Bearer hunter2"


def test_make_backend_factory():
    assert make_diagnosis_backend("oracle").name == "oracle"
    cfg = BackendConfig(endpoint="http://example.invalid/")
    assert make_diagnosis_backend("remote", cfg).name == "remote"
    with pytest.raises(ValueError):
        make_diagnosis_backend("telepathy")
