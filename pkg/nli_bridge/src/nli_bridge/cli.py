"""Console entry point: run the scoring service."""

import argparse
import sys

from .config import BACKENDS, ConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nli-bridge", description="HTTP entailment and faithfulness scoring service"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--config", help="TOML config file")
    serve.add_argument("--host", help="bind address (default 127.0.0.1)")
    serve.add_argument("--port", type=int, help="bind port (default 8741)")
    serve.add_argument("--backend", choices=BACKENDS, help="scoring backend")
    serve.add_argument("--max-batch", type=int, dest="max_batch", help="batch size limit")
    serve.add_argument("--device", help="inference device for the real backend")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            host=args.host,
            port=args.port,
            backend=args.backend,
            max_batch=args.max_batch,
            device=args.device,
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
