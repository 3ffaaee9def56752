"""Client for the HTTP service.

By default requests run in-process against the ASGI app, so the command
line works with no server running; pass a base URL to talk to a remote
instance instead. Either way the wire format is identical.
"""

from __future__ import annotations

from typing import Any

import httpx


class ServiceError(RuntimeError):
    """The service rejected a request; carries its detail message."""


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 600.0):
        if server:
            self._http = httpx.Client(base_url=server, timeout=timeout)
        else:
            from starlette.testclient import TestClient

            from .service import app
            self._http = TestClient(app)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str,
                 payload: dict[str, Any] | None = None) -> dict[str, Any]:
        try:
            response = self._http.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise ServiceError(f"{path}: {exc}") from exc
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(f"{path}: {detail}")
        return response.json()

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        return self._request("POST", path, payload)

    # ------------------------------------------------------------- compute

    def health(self) -> dict[str, Any]:
        return self._request("GET", "/health")

    def collect(self, scenario_text: str, scene_text: str,
                labels: list[str] | None = None, settings: dict | None = None,
                paper_scale: bool = False) -> dict[str, str]:
        return self._post("/collect", {
            "scenario_text": scenario_text, "scene_text": scene_text,
            "labels": labels, "settings": settings or {},
            "paper_scale": paper_scale})["datasets"]

    def train(self, datasets: list[str], variant: str,
              seed: int | None = None, settings: dict | None = None,
              paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/train", {
            "datasets": datasets, "variant": variant, "seed": seed,
            "settings": settings or {}, "paper_scale": paper_scale})

    def update_pb(self, checkpoint: str, dataset: str,
                  start_p: list[float] | None = None, label: str = "",
                  settings: dict | None = None,
                  paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/update-pb", {
            "checkpoint": checkpoint, "dataset": dataset, "start_p": start_p,
            "label": label, "settings": settings or {},
            "paper_scale": paper_scale})

    def control(self, checkpoint: str, scene_text: str, object_name: str,
                template: int, scenario_text: str | None = None,
                regime: str | None = None, p: list[float] | None = None,
                body: int = 0, seed: int | None = None,
                settings: dict | None = None,
                paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/control", {
            "checkpoint": checkpoint, "scene_text": scene_text,
            "object": object_name, "template": template,
            "scenario_text": scenario_text, "regime": regime, "p": p,
            "body": body, "seed": seed, "settings": settings or {},
            "paper_scale": paper_scale})

    def eval(self, checkpoint: str, scenario_text: str, scene_text: str,
             regime: str, variant_name: str = "",
             p: list[float] | None = None, seed: int | None = None,
             settings: dict | None = None,
             paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/eval", {
            "checkpoint": checkpoint, "scenario_text": scenario_text,
            "scene_text": scene_text, "regime": regime,
            "variant_name": variant_name, "p": p, "seed": seed,
            "settings": settings or {}, "paper_scale": paper_scale})

    def ablate(self, scenario_text: str, scene_text: str,
               seed: int | None = None, regimes: list[str] | None = None,
               variants: list[str] | None = None,
               settings: dict | None = None,
               paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/ablate", {
            "scenario_text": scenario_text, "scene_text": scene_text,
            "seed": seed, "regimes": regimes, "variants": variants,
            "settings": settings or {}, "paper_scale": paper_scale})

    def pca(self, checkpoint: str) -> dict[str, Any]:
        return self._post("/pca", {"checkpoint": checkpoint})

    # ------------------------------------------------------------ sessions

    def create_session(self, checkpoint: str,
                       start_p: list[float] | None = None,
                       settings: dict | None = None,
                       paper_scale: bool = False) -> dict[str, Any]:
        return self._post("/sessions", {
            "checkpoint": checkpoint, "start_p": start_p,
            "settings": settings or {}, "paper_scale": paper_scale})

    def read_session(self, session_id: str) -> dict[str, Any]:
        return self._request("GET", f"/sessions/{session_id}")

    def observe(self, session_id: str, u: list[float],
                s: list[float]) -> dict[str, Any]:
        return self._post(f"/sessions/{session_id}/observe", {"u": u, "s": s})

    def close_session(self, session_id: str) -> dict[str, Any]:
        return self._request("DELETE", f"/sessions/{session_id}")
