"""Run the server: maskbeam-server --config server.json [--host H] [--port P]."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import ServerConfig, ServerConfigError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="maskbeam-server", description=__doc__)
    parser.add_argument("--config", required=True, help="server config JSON")
    parser.add_argument("--host", help="override the config bind host")
    parser.add_argument("--port", type=int, help="override the config bind port")
    args = parser.parse_args(argv)
    try:
        config = ServerConfig.from_file(args.config)
    except ServerConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    app = create_app(config)
    uvicorn.run(app, host=args.host or config.host, port=args.port or config.port)
    return 0


def run() -> None:
    sys.exit(main())
