"""`ioc-decay`: command-line front end for the decaying-score engine.

Subcommands: import, score, curve, replay, fit, expired, clear-fp, serve.
JSON goes to stdout (indent 2, sorted keys); logs and errors go to stderr.

Exit codes:
    0  success
    1  domain error (unknown attribute, bad feed, too little history, ...)
    2  usage error (missing or invalid flags)
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import TypeAdapter
from pydantic import ValidationError as PydanticValidationError

from .. import lifecycle
from ..config import ApiSettings, Settings, load_settings
from ..decay import (
    DecayModel,
    DecayVariant,
    ExponentConvention,
    TimeUnit,
    emit_curve,
    half_life,
    write_curve_csv,
)
from ..documents import (
    expired_document,
    false_positive_clear_ack,
    load_store_snapshot,
    open_store,
    save_store,
    score_document,
    to_json,
)
from ..errors import InvalidParameter, IocDecayError
from ..ingestion import import_all, load_sightings, sightings_for
from ..lifecycle import SightingKind, SightingState
from ..logconfig import configure_logging
from ..schemas import UtcDatetime, format_timestamp
from ..store import StoreSnapshot, save_snapshot

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

_TIMESTAMP = TypeAdapter(UtcDatetime)


# =============================================================================
# Argument types
# =============================================================================

def timestamp(raw: str) -> datetime:
    """RFC 3339 timestamp with an explicit offset."""
    try:
        return _TIMESTAMP.validate_python(raw)
    except PydanticValidationError:
        raise argparse.ArgumentTypeError(f"not an RFC 3339 timestamp with offset: {raw!r}") from None


def positive_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {raw}")
    return value


def time_unit(raw: str) -> TimeUnit:
    try:
        return TimeUnit.parse(raw)
    except InvalidParameter as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def decay_variant(raw: str) -> DecayVariant:
    try:
        return DecayVariant.parse(raw)
    except InvalidParameter as e:
        raise argparse.ArgumentTypeError(str(e)) from None


# =============================================================================
# Parser
# =============================================================================

def _add_global_opts(p: argparse.ArgumentParser, *, suppress: bool) -> None:
    """Global flags, accepted before or after the subcommand.

    The subparser copy uses SUPPRESS defaults so an absent flag there leaves
    the top-level value untouched.
    """
    p.add_argument(
        "--config",
        type=Path,
        default=argparse.SUPPRESS if suppress else None,
        help="YAML config file (overrides IOC_DECAY_CONFIG).",
    )
    p.add_argument(
        "--now",
        type=timestamp,
        default=argparse.SUPPRESS if suppress else None,
        help="Evaluation clock, RFC 3339 (defaults to the wall clock).",
    )


def _add_model_opts(p: argparse.ArgumentParser, *, required: bool) -> None:
    p.add_argument("--model", type=decay_variant, required=required, help="linear, exponential or polynomial.")
    p.add_argument("--tau", type=positive_float, help="End-time (polynomial), in --unit.")
    p.add_argument("--delta", type=positive_float, required=required, help="Decay rate.")
    p.add_argument("--unit", type=time_unit, default=None, help="Time unit: s, h or d (default h).")
    p.add_argument(
        "--convention",
        choices=[c.value for c in ExponentConvention],
        default=None,
        help="Polynomial exponent: 1/delta (reciprocal) or delta (direct).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ioc-decay",
        description="Score, decay and expire shared indicators of compromise.",
    )
    _add_global_opts(parser, suppress=False)

    common = argparse.ArgumentParser(add_help=False)
    _add_global_opts(common, suppress=True)

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "import", parents=[common], help="Import events, sources and sightings; write the snapshot."
    )

    p = sub.add_parser("score", parents=[common], help="Score one attribute.")
    p.add_argument("attribute_id")
    p.add_argument("--at", type=timestamp, help="Evaluation instant (overrides --now).")

    p = sub.add_parser("curve", parents=[common], help="Emit a decay curve as CSV.")
    _add_model_opts(p, required=True)
    p.add_argument("--base", type=float, required=True, help="Base score in [0,100].")
    p.add_argument("--horizon", type=positive_float, required=True, help="Last sample time, in --unit.")
    p.add_argument("--step", type=positive_float, required=True, help="Sampling step, in --unit.")
    p.add_argument("--out", type=Path, help="CSV file (default: stdout).")

    p = sub.add_parser("replay", parents=[common], help="Trace an attribute's score through a sighting feed.")
    p.add_argument("attribute_id")
    p.add_argument("--sightings", type=Path, help="NDJSON feed (default: configured sightings_file).")
    p.add_argument("--until", type=timestamp, help="Final evaluation instant (default: --now).")
    _add_model_opts(p, required=False)

    p = sub.add_parser("fit", parents=[common], help="Estimate tau from regular positive sightings.")
    p.add_argument("attribute_id")
    p.add_argument("--sightings", type=Path, help="NDJSON feed (default: configured sightings_file).")
    p.add_argument("--c", dest="multiplier", type=positive_float, help="Gap multiplier (default from config).")
    p.add_argument("--quantile", type=positive_float, help="Gap quantile in (0,1] (default from config).")
    p.add_argument("--unit", type=time_unit, default=TimeUnit.HOURS, help="Unit of the printed estimate.")

    p = sub.add_parser("expired", parents=[common], help="List attributes whose score is 0.")
    p.add_argument("--at", type=timestamp, help="Evaluation instant (overrides --now).")

    p = sub.add_parser("clear-fp", parents=[common], help="Lift a false-positive flag and save the snapshot.")
    p.add_argument("attribute_id")
    p.add_argument("--at", type=timestamp, help="Clearing instant (overrides --now).")

    p = sub.add_parser("serve", parents=[common], help="Run the HTTP service.")
    p.add_argument("--bind", help="host:port (overrides api.bind_address).")
    p.add_argument("--readonly", action="store_true", help="Reject sighting posts with 409.")

    return parser


# =============================================================================
# Commands
# =============================================================================

def _now(args: argparse.Namespace, override: Optional[datetime] = None) -> datetime:
    return override or args.now or datetime.now(timezone.utc)


def _print_json(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))


def _format_score(value: float) -> str:
    return f"{value:.6f}"


def model_from_args(
    parser: argparse.ArgumentParser,
    args: argparse.Namespace,
    fallback: Optional[DecayModel] = None,
) -> DecayModel:
    """
    DecayModel from --model/--tau/--delta/--unit/--convention, else ``fallback``.

    Parameters left off the command line come from ``fallback`` re-expressed
    in the requested unit. Switching to another variant needs an explicit
    --delta.
    """
    variant = args.model or (fallback.variant if fallback else None)
    if variant is None:
        parser.error("--model and --delta are required")
    unit = args.unit or (fallback.unit if fallback else TimeUnit.HOURS)
    same = fallback.in_unit(unit) if fallback is not None and fallback.variant is variant else None

    delta = args.delta if args.delta is not None else (same.delta if same else None)
    if delta is None:
        parser.error(f"--delta is required for the {variant.value} model")
    tau = None
    if variant is DecayVariant.POLYNOMIAL:
        tau = args.tau if args.tau is not None else (same.tau if same else None)
        if tau is None:
            parser.error("--tau is required for the polynomial model")
    convention = ExponentConvention(args.convention or (fallback.convention.value if fallback else "reciprocal"))
    return DecayModel(variant, delta, tau=tau, unit=unit, convention=convention)


def cmd_import(settings: Settings) -> int:
    result = import_all(settings)
    save_snapshot(result.snapshot, settings.store_path)
    _print_json(result.report.model_dump())
    return EXIT_OK


def cmd_score(settings: Settings, args: argparse.Namespace) -> int:
    snapshot = load_store_snapshot(settings)
    _print_json(to_json(score_document(snapshot, args.attribute_id, _now(args, args.at))))
    return EXIT_OK


def cmd_expired(settings: Settings, args: argparse.Namespace) -> int:
    snapshot = load_store_snapshot(settings)
    _print_json(to_json(expired_document(snapshot, _now(args, args.at))))
    return EXIT_OK


def cmd_clear_fp(settings: Settings, args: argparse.Namespace) -> int:
    store = open_store(settings)
    state = store.clear_false_positive(args.attribute_id, _now(args, args.at))
    save_store(store, settings)
    _print_json(to_json(false_positive_clear_ack(args.attribute_id, state, store.snapshot())))
    return EXIT_OK


def cmd_curve(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    if not 0.0 <= args.base <= 100.0:
        parser.error(f"--base must lie in [0,100], got {args.base}")
    if args.horizon < args.step:
        parser.error("--horizon must be >= --step")
    model = model_from_args(parser, args)

    points = emit_curve(args.base, model, args.horizon, args.step)
    hl = half_life(model, args.base)
    hl_line = f"half_life={'none' if hl is None else f'{hl:.6f}'} {model.unit.value}"

    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w", encoding="utf-8", newline="") as handle:
            write_curve_csv(points, model.unit, handle)
        print(hl_line)
    else:
        write_curve_csv(points, model.unit, sys.stdout)
        print(hl_line, file=sys.stderr)
    return EXIT_OK


def _feed_path(settings: Settings, args: argparse.Namespace) -> Path:
    path = args.sightings or settings.sightings_file
    if path is None:
        raise InvalidParameter("no sighting feed: pass --sightings or configure sightings_file")
    return path


def replay_trace(
    snapshot: StoreSnapshot,
    attribute_id: str,
    sightings: list,
    model: DecayModel,
    until: datetime,
) -> list[str]:
    """
    Apply the feed's sightings for one attribute to a fresh state.

    One line per sighting (timestamp, kind, score before, score after) and a
    final ``until`` line with the score at ``until``.
    """
    attribute = snapshot.attribute(attribute_id)
    state = SightingState()
    lines = []
    for sighting in sightings:
        if sighting.attribute_id != attribute_id:
            continue
        before = lifecycle.current_score(attribute, state, model, snapshot.scoring, sighting.timestamp)
        state = lifecycle.record_sighting(state, sighting, attribute)
        after = lifecycle.current_score(attribute, state, model, snapshot.scoring, sighting.timestamp)
        lines.append(
            "\t".join([
                format_timestamp(sighting.timestamp),
                sighting.kind.value,
                _format_score(before.current_score),
                _format_score(after.current_score),
            ])
        )
    final = lifecycle.current_score(attribute, state, model, snapshot.scoring, until)
    lines.append("\t".join([format_timestamp(until), "until", _format_score(final.current_score)]))
    return lines


def cmd_replay(settings: Settings, parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    snapshot = load_store_snapshot(settings)
    model = model_from_args(parser, args, fallback=snapshot.model_for(args.attribute_id))
    sightings = load_sightings(_feed_path(settings, args))
    for line in replay_trace(snapshot, args.attribute_id, sightings, model, _now(args, args.until)):
        print(line)
    return EXIT_OK


def cmd_fit(settings: Settings, parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    if args.quantile is not None and args.quantile > 1:
        parser.error(f"--quantile must lie in (0,1], got {args.quantile}")
    history = sightings_for(load_sightings(_feed_path(settings, args)), args.attribute_id)
    multiplier = args.multiplier or settings.lifecycle.tau_multiplier
    quantile = args.quantile or settings.lifecycle.tau_quantile
    tau = lifecycle.estimate_tau(history, multiplier=multiplier, quantile=quantile)
    stats = lifecycle.gap_statistics(history)
    scale = args.unit.seconds

    _print_json({
        "attribute_id": args.attribute_id,
        "tau": tau.total_seconds() / scale,
        "unit": args.unit.value,
        "multiplier": multiplier,
        "quantile": quantile,
        "positive_sightings": sum(1 for s in history if s.kind is SightingKind.POSITIVE),
        "gaps": {
            "count": stats["count"],
            "min": stats["min"] / scale,
            "median": stats["median"] / scale,
            "max": stats["max"] / scale,
        },
    })
    return EXIT_OK


def cmd_serve(settings: Settings, parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    import uvicorn

    from ..api.main import create_app

    try:
        api = ApiSettings(
            bind_address=args.bind or settings.api.bind_address,
            readonly=settings.api.readonly or args.readonly,
        )
    except PydanticValidationError as e:
        parser.error(f"--bind: {e.errors()[0]['msg']}")
    settings = settings.model_copy(update={"api": api})

    logger.info(f"Serving on {api.bind_address} (readonly={api.readonly})")
    uvicorn.run(create_app(settings), host=api.host, port=api.port, log_config=None)
    return EXIT_OK


def dispatch(settings: Settings, parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "import":
        return cmd_import(settings)
    if cmd == "score":
        return cmd_score(settings, args)
    if cmd == "curve":
        return cmd_curve(parser, args)
    if cmd == "replay":
        return cmd_replay(settings, parser, args)
    if cmd == "fit":
        return cmd_fit(settings, parser, args)
    if cmd == "expired":
        return cmd_expired(settings, args)
    if cmd == "clear-fp":
        return cmd_clear_fp(settings, args)
    if cmd == "serve":
        return cmd_serve(settings, parser, args)
    parser.error(f"Unknown command: {cmd}")
    return EXIT_USAGE


def emit_error(message: str, kind: str) -> None:
    json.dump({"error": message, "type": kind}, sys.stderr)
    sys.stderr.write("\n")


def main(argv: list[str] | None = None) -> int:
    load_dotenv()  # best-effort; real env vars and flags take precedence
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = load_settings(args.config)
        configure_logging(settings.log_level, settings.log_file)
        return dispatch(settings, parser, args)
    except IocDecayError as e:
        emit_error(str(e), type(e).__name__)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
