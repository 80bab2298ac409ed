"""Command-line entry point: ``run``, ``inspect`` and ``verify``.

Reports go to stdout as JSON; diagnostics go to stderr. Exit codes: 0 success,
1 failed assertion or rejected chain, 2 unusable input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .chain import Chain, load_chain, verify_bytes
from .scenario import ScenarioError, ScenarioScript, bundled_scenarios, bundled_script, run_scenario

log = logging.getLogger("healthchain")


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_script(ref: str) -> ScenarioScript:
    path = Path(ref)
    if path.exists():
        return ScenarioScript.load(path)
    if ref in bundled_scenarios():
        return bundled_script(ref)
    raise ScenarioError(f"no such script file or bundled scenario: {ref}")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        script = _load_script(args.script)
        out = Path(args.out) if args.out else Path("runs") / script.name
        transcript = run_scenario(script, seed=args.seed, out_dir=out)
    except ScenarioError as exc:
        log.error("%s", exc)
        return 2
    sys.stdout.buffer.write(transcript.to_bytes())
    for failure in transcript.summary["failed"]:
        log.error("FAILED step %s: %s", failure["step"], failure["label"])
    log.info("wrote %s", out)
    return transcript.exit_code


def _open_chain(path: str) -> tuple[Optional[Chain], int]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        log.error("cannot read %s: %s", path, exc)
        return None, 2
    verdict = verify_bytes(data)
    if not verdict.ok:
        _emit(verdict.to_json())
        log.error("chain rejected at height %s: %s", verdict.height, verdict.reason)
        return None, 1
    return Chain.from_blocks(load_chain(path)), 0


def cmd_verify(args: argparse.Namespace) -> int:
    chain, code = _open_chain(args.chain)
    if chain is None:
        return code
    _emit({"result": "accept", "height": chain.height, "tip": chain.tip.block_hash,
           "state_digest": chain.state.digest()})
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    chain, code = _open_chain(args.chain)
    if chain is None:
        return code
    if args.block is not None:
        if not 0 <= args.block <= chain.height:
            log.error("no block at height %s (tip is %s)", args.block, chain.height)
            return 2
        _emit(chain.blocks[args.block].to_json())
    elif args.account is not None:
        address = args.account.lower().removeprefix("0x")
        account = chain.state.get(address)
        if account is None:
            log.error("no account %s", address)
            return 2
        _emit({"address": address, **account.to_json()})
    else:
        _emit([e.to_json() for e in chain.logs(topic=args.topic)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="healthchain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario script (file path or bundled name)")
    run.add_argument("script")
    run.add_argument("--seed", type=int, default=None, help="override the script's seed")
    run.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    run.set_defaults(func=cmd_run)

    inspect = sub.add_parser("inspect", help="report on a verified chain file")
    inspect.add_argument("chain")
    which = inspect.add_mutually_exclusive_group(required=True)
    which.add_argument("--block", type=int)
    which.add_argument("--account")
    which.add_argument("--topic")
    inspect.set_defaults(func=cmd_inspect)

    verify = sub.add_parser("verify", help="verify a chain file")
    verify.add_argument("chain")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
