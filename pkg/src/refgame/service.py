"""Read-only HTTP API over a loaded model and corpus.

State is immutable after startup, so every response is a pure function
of the request and any number of clients may hit the service
concurrently. The built web console, when present, is served statically
under /.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .dataset import Corpus
from .errors import UnknownSymbol
from .lexicon import Description
from .model import ModelParams, entropy, posterior


class IdentifyRequest(BaseModel):
    env_id: str
    symbols: list[str]


def identify(params: ModelParams, env, symbols: list[str]) -> dict:
    """Shared identify path for the REPL and the HTTP endpoint."""
    desc = Description(frozenset(params.lexicon.lookup(tok).index for tok in symbols))
    post = posterior(desc, env, params)
    ranked = post.ranked(env)
    return {
        "env_id": env.id,
        "posterior": [{"object_id": oid, "prob": prob} for oid, prob in ranked],
        "entropy": entropy(post.probs),
    }


def create_app(params: ModelParams, corpus: Corpus, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="refgame", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.get("/api/lexicon")
    def get_lexicon():
        return {
            "symbols": [
                {"name": s.name, "index": s.index, "channels": list(s.channels)}
                for s in params.lexicon.symbols
            ]
        }

    @app.get("/api/environments")
    def list_environments():
        return {
            "environments": [
                {"id": e.id, "category": e.category, "object_count": len(e.objects)}
                for e in corpus.environments
            ]
        }

    @app.get("/api/environments/{env_id}")
    def get_environment(env_id: str):
        env = corpus.env_map.get(env_id)
        if env is None:
            raise HTTPException(status_code=404, detail=f"unknown environment {env_id!r}")
        scene = None
        if env.scene is not None:
            scene = [
                {
                    "object_id": b.object_id,
                    "x": b.x,
                    "y": b.y,
                    "w": b.w,
                    "h": b.h,
                    "color": list(b.color),
                }
                for b in env.scene
            ]
        return {
            "id": env.id,
            "category": env.category,
            "objects": env.object_ids(),
            "scene": scene,
        }

    @app.post("/api/identify")
    def post_identify(req: IdentifyRequest):
        env = corpus.env_map.get(req.env_id)
        if env is None:
            raise HTTPException(status_code=404, detail=f"unknown environment {req.env_id!r}")
        try:
            return identify(params, env, req.symbols)
        except UnknownSymbol as exc:
            raise HTTPException(
                status_code=422, detail={"error": "unknown symbol", "token": exc.token}
            ) from exc

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
