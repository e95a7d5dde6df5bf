#!/usr/bin/env python3
"""Serve the console API over a demo workspace without any external network.

The gateway records against the same deterministic scripted transport used to
build the demo run, so interactive review sessions (conflict checks, batch
generation, correction proposals) work offline.

Usage:
  python3 scripts/make_demo_run.py --workspace demo
  ENGINE_API_TOKEN=demo-token python3 scripts/serve_demo.py --workspace demo
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import uvicorn

sys.path.insert(0, str(Path(__file__).parent))
from make_demo_run import scripted_transport  # noqa: E402

from dataengine.engine import EngineConfig  # noqa: E402
from dataengine.service import create_app  # noqa: E402


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", default="demo", type=Path)
    parser.add_argument("--addr", default="127.0.0.1:8080")
    args = parser.parse_args()

    if not os.environ.get("ENGINE_API_TOKEN"):
        parser.error("set ENGINE_API_TOKEN before serving")
    config_path = args.workspace / "config.yaml"
    if not config_path.exists():
        parser.error(f"{config_path} not found; run make_demo_run.py first")

    config = EngineConfig.from_file(config_path)
    # record mode + scripted transport: new IPO requests succeed offline
    config.gateway_mode = "record"
    config.cassette_path = str(args.workspace / "serve_cassette.jsonl")
    app = create_app(config)
    app.state.ctx.state.gateway.transport = scripted_transport

    host, _, port = args.addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))


if __name__ == "__main__":
    main()
