"""oracle-bridge command line.

Serves the score-oracle wire protocol over TCP (--listen host:port) or stdio
(--stdio). --echo-prompts prints the resolved slot-to-prompt table as one
JSON line; without a serving mode the command then exits, which is the
debug path for checking prompt composition.
"""

from __future__ import annotations

import argparse
import json
import sys

from .backends import StableDiffusionBackend, SyntheticBackend
from .prompts import DEFAULT_NEGATIVE_FRAGMENT, PromptTable
from .server import serve_stdio, serve_tcp

DEFAULT_MODEL = "stabilityai/stable-diffusion-2-1-base"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-bridge",
                                     description="Serve a text-conditioned denoiser as a score oracle")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="model id for the diffusers backend")
    parser.add_argument("--backend", choices=("diffusers", "synthetic"), default="diffusers",
                        help="denoiser implementation (synthetic runs anywhere, deterministically)")
    parser.add_argument("--listen", default=None, help="TCP listen address, host:port")
    parser.add_argument("--stdio", action="store_true", help="serve over stdin/stdout instead of TCP")
    parser.add_argument("--target", default="", help="target prompt text")
    parser.add_argument("--negatives", default=DEFAULT_NEGATIVE_FRAGMENT,
                        help="negative fragment appended to the target for the tnp slot")
    parser.add_argument("--timesteps", type=int, default=1000,
                        help="native ladder size for the synthetic backend")
    parser.add_argument("--echo-prompts", action="store_true",
                        help="print the slot-to-prompt table as JSON before serving")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    prompts = PromptTable(target_text=args.target, negative_fragment=args.negatives)
    if args.echo_prompts:
        print(json.dumps(prompts.as_dict()))
        sys.stdout.flush()
    if not args.listen and not args.stdio:
        if args.echo_prompts:
            return 0
        print("error: pass --listen host:port or --stdio (or --echo-prompts)", file=sys.stderr)
        return 2
    if args.backend == "synthetic":
        backend = SyntheticBackend(prompts, num_train_timesteps=args.timesteps)
    else:
        backend = StableDiffusionBackend(prompts, model_id=args.model)
    try:
        if args.stdio:
            serve_stdio(backend)
        else:
            serve_tcp(args.listen, backend)
    except KeyboardInterrupt:
        pass
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
