import json
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import pytest

from scoresidecar.server import make_server
from scoresidecar.service import SidecarConfig


@pytest.fixture(scope="module")
def base_url():
    server = make_server(SidecarConfig(port=0))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def get(url):
    with urllib.request.urlopen(url, timeout=10) as response:
        return response.status, json.loads(response.read())


def post(url, payload):
    raw = json.dumps(payload).encode()
    request = urllib.request.Request(
        url, data=raw, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(request, timeout=10) as response:
        return response.status, json.loads(response.read())


class TestHealth:
    def test_healthz_reports_models(self, base_url):
        status, payload = get(f"{base_url}/healthz")
        assert status == 200
        assert payload["status"] == "ok"
        assert set(payload["models"]) == {"nli", "rerank", "similarity"}

    def test_unknown_path_404(self, base_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            get(f"{base_url}/nope")
        assert err.value.code == 404


class TestScoreEndpoint:
    def test_round_trip(self, base_url):
        status, payload = post(
            f"{base_url}/v1/score",
            {
                "task": "nli",
                "pairs": [
                    {"a": "the cat sat on the mat", "b": "the cat sat"},
                    {"a": "alpha", "b": "omega"},
                ],
            },
        )
        assert status == 200
        assert [r["value"] for r in payload["results"]] == [1.0, 0.0]

    def test_bad_task_is_400(self, base_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            post(f"{base_url}/v1/score", {"task": "nope", "pairs": []})
        assert err.value.code == 400
        assert "task" in json.loads(err.value.read())["error"]

    def test_malformed_json_is_400(self, base_url):
        request = urllib.request.Request(
            f"{base_url}/v1/score",
            data=b"{broken",
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(request, timeout=10)
        assert err.value.code == 400

    def test_concurrent_requests(self, base_url):
        body = {"task": "rerank", "pairs": [{"a": "dog", "b": "the dog"}] * 8}

        def call(_):
            return post(f"{base_url}/v1/score", body)

        with ThreadPoolExecutor(max_workers=6) as pool:
            outcomes = list(pool.map(call, range(12)))
        for status, payload in outcomes:
            assert status == 200
            assert all(r["value"] == 1.0 for r in payload["results"])
