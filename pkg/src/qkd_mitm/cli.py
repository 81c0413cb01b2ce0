"""Command-line entry point: ``qkd-mitm {verify-su2,session,experiment,bounds}``.

Exit status is 0 on success, 1 on a reported error or failed check, and 2 on
bad usage.  Errors print as a single ``error[CODE]: message`` line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .adversary import AdversaryStrategy, forgery_log_lines
from .auth import TWO_STEP, WEGMAN_CARTER, AuthScheme, analytic_bounds
from .bits import BitString
from .errors import ConfigError, ContractViolation, GuardRefused, KeyExhausted, Unimplemented
from .experiments import ExperimentPlan, build_config, emit_csv, run_trials
from .hash_core import SpaceParams, ball_coverage, verify_su2_family
from .protocol import parse_public_hash, run_session

ERROR_CODES = (
    (GuardRefused, "E_GUARD"),
    (KeyExhausted, "E_KEY"),
    (Unimplemented, "E_UNIMPLEMENTED"),
    (ConfigError, "E_CONFIG"),
    (ContractViolation, "E_CONTRACT"),
    (OSError, "E_IO"),
)


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 63:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^63)")
    return value


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkd-mitm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-su2", help="exhaustively check the Toeplitz family is strongly universal")
    v.add_argument("--r", type=int, required=True, dest="r_bits")
    v.add_argument("--n", type=int, required=True, dest="n_bits")
    v.add_argument("--override", action="store_true", help="lift the small-parameter guard")

    s = sub.add_parser("session", help="run one protocol session and report the outcome")
    s.add_argument("--config", type=Path, help="JSON file of configuration values")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--adversary", default="absent",
                   help="absent, guess_tag, fixed_message, ball_search:R, list:L, full_mitm[:mode]")
    s.add_argument("--auth", choices=(TWO_STEP, WEGMAN_CARTER), dest="scheme")
    s.add_argument("--mode", choices=("immediate", "postponed"), dest="auth_mode")
    s.add_argument("--m", type=int, dest="m_bits")
    s.add_argument("--r", type=int, dest="r_bits")
    s.add_argument("--n", type=int, dest="n_bits")
    s.add_argument("--public-hash", dest="public_hash")
    s.add_argument("--num-qubits", type=int, dest="num_qubits")
    s.add_argument("--channel-error-rate", type=float, dest="channel_error_rate")
    s.add_argument("--countermeasure", action="append", dest="countermeasures",
                   choices=("secret_hash_check", "otp_reconciliation"))
    s.add_argument("--transcript", type=Path, help="write the wire transcript (JSON lines)")
    s.add_argument("--forgery-log", type=Path, help="write Eve's per-phase forgery log (JSON lines)")

    e = sub.add_parser("experiment", help="run a Monte Carlo plan and write CSV")
    e.add_argument("--plan", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--seed", type=_seed, help="override the plan's seed")
    e.add_argument("--trials", type=int, help="override the plan's trial count")
    e.add_argument("--jobs", type=int, default=1)

    b = sub.add_parser("bounds", help="print the analytic forgery bounds")
    b.add_argument("--auth", choices=(TWO_STEP, WEGMAN_CARTER), default=TWO_STEP, dest="scheme")
    b.add_argument("--m", type=int, default=64, dest="m_bits")
    b.add_argument("--r", type=int, default=8, dest="r_bits")
    b.add_argument("--n", type=int, default=4, dest="n_bits")
    b.add_argument("--public-hash", default="xor_fold", dest="public_hash")
    b.add_argument("--eve", default="fixed_message",
                   help="fixed_message, list:L or ball_search:R")
    b.add_argument("--message", help="Eve's fixed message as a bit string (default all zeros)")
    b.add_argument("--override", action="store_true")
    return p


def _verify(args) -> int:
    report = verify_su2_family(SpaceParams(args.r_bits + 1, args.r_bits, args.n_bits), override=args.override)
    print(f"r={report.r_bits} n={report.n_bits} family_size={report.family_size} "
          f"expected={report.expected_count} min={report.min_count} max={report.max_count} "
          f"cells={report.cells_checked} {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _session(args) -> int:
    params = {}
    if args.config is not None:
        try:
            params = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config} is not valid JSON: {exc}") from exc
        if not isinstance(params, dict):
            raise ConfigError(f"{args.config} must hold a JSON object")
    for key in ("scheme", "auth_mode", "m_bits", "r_bits", "n_bits", "public_hash", "num_qubits",
                "channel_error_rate", "countermeasures"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    config = build_config(params, args.seed)
    strategy = AdversaryStrategy.parse(args.adversary, seed=args.seed)
    out = run_session(config, strategy if strategy.kind != "absent" else None)

    def hexkey(k: Optional[BitString]) -> str:
        return "-" if k is None else k.hex()

    lines = [
        ("status", out.status),
        ("abort_phase", out.abort_phase or "-"),
        ("keys_agree", out.keys_agree),
        ("mitm_completed", out.mitm_completed),
        ("final_key_bits", len(out.alice_final_key) if out.alice_final_key is not None else 0),
        ("alice_key", hexkey(out.alice_final_key)),
        ("bob_key", hexkey(out.bob_final_key)),
        ("qber_estimate", "-" if out.qber_estimate is None else f"{out.qber_estimate:.6g}"),
        ("tags_sent", out.tags_sent),
        ("forgeries_attempted", out.forgeries_attempted),
        ("forgeries_accepted", out.forgeries_accepted),
        ("sifting_forged", out.sifting_forged),
        ("check_detected", out.check_detected),
        ("alice_key_consumed", out.alice_key_consumed),
        ("bob_key_consumed", out.bob_key_consumed),
    ]
    for k, v in lines:
        print(f"{k}={str(v).lower() if isinstance(v, bool) else v}")
    if args.transcript is not None:
        args.transcript.write_text(out.transcript.to_lines())
    if args.forgery_log is not None:
        args.forgery_log.write_text(forgery_log_lines(out.forgery_log))
    return 0


def _experiment(args) -> int:
    plan = ExperimentPlan.from_file(args.plan)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        from dataclasses import replace
        plan = replace(plan, **overrides)
    result = run_trials(plan, jobs=args.jobs)
    emit_csv(result, args.out)
    print(f"wrote {len(result.rows)} row(s) to {args.out}")
    return 0


def _bounds(args) -> int:
    space = SpaceParams(args.m_bits, args.r_bits, args.n_bits)
    f = parse_public_hash(args.public_hash, args.m_bits, args.r_bits) if args.scheme == TWO_STEP else None
    scheme = AuthScheme(args.scheme, space, f)
    kind, _, arg = args.eve.partition(":")
    m_e = None
    if kind == "fixed_message" and not arg:
        model = "fixed_message"
        if args.message is not None:
            m_e = BitString.from_str(args.message)
    elif kind == "list" and arg:
        model = ("list", int(arg))
    elif kind == "ball_search" and arg and scheme.kind == TWO_STEP:
        model = ("list", ball_coverage(f, int(arg)))
    elif kind == "ball_search" and arg:
        model = ("list", 0)
    else:
        raise ConfigError(f"cannot parse adversary model {args.eve!r}")
    bounds = analytic_bounds(scheme, model, m_e=m_e, override=args.override)
    print(f"eps1={bounds.eps1:.6g} eps2={bounds.eps2:.6g} eps={bounds.eps:.6g}")
    return 0


COMMANDS = {"verify-su2": _verify, "session": _session, "experiment": _experiment, "bounds": _bounds}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        # int() on a malformed adversary argument and similar
        code = next((c for t, c in ERROR_CODES if isinstance(exc, t)), "E_CONFIG")
        print(f"error[{code}]: {exc}", file=sys.stderr)
        return 1
    except (GuardRefused, KeyExhausted, Unimplemented, OSError) as exc:
        code = next(c for t, c in ERROR_CODES if isinstance(exc, t))
        print(f"error[{code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
