import numpy as np
from fastapi.testclient import TestClient

from aavit.config import settings
from aavit.imaging import encode_ppm
from main import app


def ppm_upload(pixels, name="frame.ppm"):
    return {"file": (name, encode_ppm(pixels), "image/x-portable-pixmap")}


class TestCoreEndpoints:
    """Tests for the root and health endpoints"""

    def test_root(self, client):
        """Test the welcome message"""
        response = client.get("/")
        assert response.status_code == 200
        assert "Welcome" in response.json()["message"]

    def test_health(self, client):
        """Test the health check"""
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "healthy"}


class TestScoring:
    """Tests for the scoring endpoints"""

    def test_score_frame(self, client, toy_model, rng):
        """Test the score of an uploaded frame"""
        pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        response = client.post("/score", files=ppm_upload(pixels))
        assert response.status_code == 200
        data = response.json()
        assert data["id"] == "frame.ppm"
        assert abs(sum(data["probabilities"]) - 1.0) < 1e-6
        assert data["score"] == data["probabilities"][0]
        expected = "real" if data["score"] >= settings.decision_threshold else "attack"
        assert data["decision"] == expected

    def test_not_a_ppm(self, client):
        """Test that a non-PPM upload is a bad request"""
        response = client.post("/score", files={"file": ("x.png", b"\x89PNG....", "image/png")})
        assert response.status_code == 400
        assert "byte offset" in response.json()["detail"]

    def test_wrong_size(self, client):
        """Test that a frame of another size is unprocessable"""
        response = client.post("/score", files=ppm_upload(np.zeros((16, 16, 3), dtype=np.uint8)))
        assert response.status_code == 422

    def test_model_config(self, client, toy_model):
        """Test that the served architecture is reported"""
        response = client.get("/model")
        assert response.status_code == 200
        assert response.json()["head_kind"] == "AAMLP"
        assert response.json()["image_size"] == toy_model.config.image_size


class TestWithoutModel:
    """Tests for a service with no checkpoint on disk"""

    def test_score_unavailable(self, tmp_path, monkeypatch):
        """Test that scoring without a checkpoint answers 503"""
        monkeypatch.setattr(settings, "checkpoint_path", str(tmp_path / "missing.aavt"))
        with TestClient(app) as client:
            response = client.post("/score", files=ppm_upload(np.zeros((8, 8, 3), dtype=np.uint8)))
        assert response.status_code == 503

    def test_loads_checkpoint_from_settings(self, checkpoint_file, monkeypatch, toy_model):
        """Test that the scorer comes from settings.checkpoint_path"""
        monkeypatch.setattr(settings, "checkpoint_path", str(checkpoint_file))
        with TestClient(app) as client:
            response = client.get("/model")
        assert response.status_code == 200
        assert response.json()["pool_out"] == toy_model.config.pool_out
