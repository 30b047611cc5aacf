"""Integration tests for the HTTP surface."""

import unittest

import pytest

pytest.importorskip("httpx")

from fastapi.testclient import TestClient  # noqa: E402

from alm_ssd.app import create_app  # noqa: E402

pytestmark = pytest.mark.integration


class TestApp(unittest.TestCase):

    def setUp(self):
        self._context = TestClient(create_app())
        self.client = self._context.__enter__()

    def tearDown(self):
        self._context.__exit__(None, None, None)

    def test_root_and_configs(self):
        self.assertEqual(self.client.get("/").json(), {"service": "alm-ssd", "status": "ok"})
        names = self.client.get("/configs").json()
        self.assertEqual(sorted(names), ["base_paper", "base_small", "stressed"])
        detail = self.client.get("/configs/base_small").json()
        self.assertEqual(detail["name"], "base_small")
        self.assertEqual(detail["branching"], [4, 4, 4, 4])
        self.assertEqual(self.client.get("/configs/nope").status_code, 404)

    def test_no_run_yet(self):
        self.assertEqual(self.client.get("/runs/latest").status_code, 404)

    def test_rejected_requests(self):
        self.assertEqual(self.client.post("/runs", json={"config": "nope"}).status_code, 404)
        response = self.client.post("/runs", json={"config": "base_small", "branching": [2, 2]})
        self.assertEqual(response.status_code, 422)
        self.assertTrue(response.json()["detail"])
        self.assertEqual(self.client.post("/runs", json={"phi": -1.0}).status_code, 422)

    @pytest.mark.slow
    def test_run_then_latest(self):
        response = self.client.post("/runs", json={"config": "base_small", "seed": 5, "branching": [2, 2, 2, 1]})
        self.assertEqual(response.status_code, 200, response.text)
        body = response.json()
        self.assertTrue(body["success"])
        self.assertEqual(body["summary"]["status"], "optimal")
        latest = self.client.get("/runs/latest")
        self.assertEqual(latest.status_code, 200)
        self.assertEqual(latest.json()["output_dir"], body["output_dir"])


if __name__ == "__main__":
    unittest.main()
