"""HTTP inference service over an ensemble bundle.

Endpoints (REST, JSON):
    POST /api/v1/predict     multipart field "image" -> prediction + alert
    GET  /api/v1/health      service/bundle status
    GET  /api/v1/model-info  the bundle's sidecar metadata, verbatim

The bundle is loaded once at startup and never mutated, so concurrent
requests share read-only state; identical requests get identical answers.
"""

from __future__ import annotations

import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from pavesnow.dataset import SNOW
from pavesnow.ensemble import load_bundle
from pavesnow.preprocess import ImageDecodeError, decode_image

DEFAULT_MAX_BODY_MB = 16


def create_app(
    bundle_dir: str | Path | None = None,
    max_body_mb: float = DEFAULT_MAX_BODY_MB,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service; the bundle loads when the app starts up.

    Until startup completes (or when no bundle directory was given) the
    service reports "loading" and prediction requests get a 503.
    """
    max_body_bytes = int(max_body_mb * 1024 * 1024)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if bundle_dir is not None:
            app.state.bundle = load_bundle(bundle_dir)
        yield

    app = FastAPI(title="pavesnow inference service", lifespan=lifespan)
    app.state.bundle = None
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/api/v1/health")
    def health():
        bundle = app.state.bundle
        return {
            "status": "ok" if bundle is not None else "loading",
            "bundle_digest": None if bundle is None else bundle.digest,
        }

    @app.get("/api/v1/model-info")
    def model_info():
        bundle = app.state.bundle
        if bundle is None:
            raise HTTPException(503, detail={"error": "bundle_not_loaded"})
        return bundle.info

    @app.post("/api/v1/predict")
    async def predict(image: UploadFile = File(...)):
        bundle = app.state.bundle
        if bundle is None:
            raise HTTPException(503, detail={"error": "bundle_not_loaded"})
        data = await image.read()
        if len(data) > max_body_bytes:
            raise HTTPException(
                413,
                detail={
                    "error": "payload_too_large",
                    "limit_bytes": max_body_bytes,
                    "received_bytes": len(data),
                },
            )
        started = time.perf_counter()
        try:
            array = decode_image(data)
        except ImageDecodeError as exc:
            raise HTTPException(422, detail={"error": "undecodable_image", "reason": str(exc)})
        result = bundle.predict_image(array)
        latency_ms = (time.perf_counter() - started) * 1000.0
        return {
            "label": result.label,
            "snow_probability": result.snow_probability,
            "per_model": bundle.per_model_snow_probability(result),
            "ensemble_weight_a": bundle.config.weight_a,
            "alert": "warn" if result.label == SNOW else "clear",
            "model_version": bundle.digest,
            "latency_ms": latency_ms,
        }

    return app


def run_server(
    bundle_dir: str | Path,
    host: str = "127.0.0.1",
    port: int = 8000,
    max_body_mb: float = DEFAULT_MAX_BODY_MB,
    cors_origins: tuple[str, ...] = ("*",),
) -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    app = create_app(bundle_dir, max_body_mb=max_body_mb, cors_origins=cors_origins)
    uvicorn.run(app, host=host, port=port)
