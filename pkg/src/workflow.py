"""Command-line entry point for bop-forge."""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from block_matcher import collect_candidates
from config import (
    DEFAULT_FUEL,
    DEFAULT_K,
    DEFAULT_L,
    DEFAULT_N,
    DEFAULT_P,
    DEFAULT_TIMEOUT_MS,
    RunConfig,
    resolve_cache_dir,
    setup_environment,
)
from delta_graph import build_delta_graph, induced_subgraphs
from emitter_verifier import Plan, WriteSet, verify
from errors import (
    EXIT_INPUT,
    EXIT_OK,
    EXIT_UNEXPECTED,
    EXIT_USAGE,
    EXIT_VERIFY_FAIL,
    BopForgeError,
    FailureKind,
    PipelineFailure,
    SplRuntimeError,
    SplSyntaxError,
    TirLinkError,
    TirSyntaxError,
    WriteSetError,
)
from logging_config import setup_logging
from pipeline import CompileResult, compile_payload, load_summaries, resolve_entry
from resource_mapper import enumerate_bindings
from spl_frontend import PAYLOAD_NAMES, build_statement_ir, interpret_spl, parse_spl, payload_path
from spl_frontend.ast import SplProgram
from target_model import build_cfg, parse_target
from target_model.model import TargetProgram
from tracing_config import custom_span, setup_tracing
from utils import delta_to_dot, dump_json, parse_int

# Initialize logging first
setup_logging()
logger = logging.getLogger("workflow")

INPUT_ERRORS = (SplSyntaxError, TirSyntaxError, TirLinkError, WriteSetError, SplRuntimeError, OSError)


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def resolve_payload_path(value: str) -> Path:
    """A payload file, or the bundled payload of that name."""
    path = Path(value)
    if not path.exists() and value in PAYLOAD_NAMES:
        return payload_path(value)
    return path


def load_program(path: Path) -> SplProgram:
    return parse_spl(_read_text(path), filename=str(path))


def load_target(path: Path) -> TargetProgram:
    return parse_target(_read_text(path))


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _add_inputs(parser: argparse.ArgumentParser, target: bool = True) -> None:
    parser.add_argument(
        "--payload",
        required=True,
        help="SPL payload file, or the name of a bundled payload",
    )
    if target:
        parser.add_argument("--target", required=True, type=Path, help="TIR target file")
        parser.add_argument(
            "--entry", type=parse_int, default=None, help="Entry block id (default: the target's)"
        )


def _add_bounds(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-P", type=int, default=DEFAULT_P, help="Statement orderings to try")
    parser.add_argument("-L", type=int, default=DEFAULT_L, help="Maximum dispatcher length")
    parser.add_argument("-N", type=int, default=DEFAULT_N, help="Induced subgraphs per delta graph")
    parser.add_argument("-K", type=int, default=DEFAULT_K, help="Dispatcher candidates per edge")
    parser.add_argument(
        "--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS, help="Solver timeout per conjunction"
    )
    parser.add_argument("--fuel", type=int, default=DEFAULT_FUEL, help="Replay fuel (blocks)")
    parser.add_argument("--jobs", type=int, default=1, help="Parallel statement orderings")
    parser.add_argument("--cache-dir", default=None, help="Block summary cache directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bop-forge",
        description="Compile SPL payloads into block oriented programs for TIR targets",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Compile and verify
  bop-forge compile --payload execve --target fixtures/targets/T1.tir --entry 0x400100

  # Re-check a write-set
  bop-forge verify --payload execve --target fixtures/targets/T1.tir --writes ws.jsonl --plan plan.json

Environment Variables:
  LOG_LEVEL                 - DEBUG, INFO (default), WARNING, ERROR
  BOPFORGE_SOLVER           - builtin (default) or z3
  BOPFORGE_CACHE            - Summary cache directory
  BOPFORGE_TRACE_EXPORTER   - none (default), console or cloud
  GOOGLE_CLOUD_PROJECT      - Required by the cloud exporter
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    compile_cmd = sub.add_parser("compile", help="Compile a payload and verify the result")
    _add_inputs(compile_cmd)
    _add_bounds(compile_cmd)
    compile_cmd.add_argument("--out", type=Path, help="Write-set file (default: stdout)")
    compile_cmd.add_argument("--plan", type=Path, help="Plan file for later verification")
    compile_cmd.add_argument("--report", type=Path, help="Verification report and search counters")
    compile_cmd.add_argument("--emit-dot", type=Path, help="Delta graph with the chosen blocks")
    compile_cmd.add_argument("--trace-json", type=Path, help="Simulated states and constraints")
    compile_cmd.add_argument("--dump-candidates", type=Path, help="Candidate blocks per statement")
    compile_cmd.add_argument("--dump-mapping", type=Path, help="Chosen resource binding")

    verify_cmd = sub.add_parser("verify", help="Replay a write-set against the payload")
    _add_inputs(verify_cmd)
    verify_cmd.add_argument("--writes", required=True, type=Path, help="Write-set file")
    verify_cmd.add_argument("--plan", required=True, type=Path, help="Plan file from compile")
    verify_cmd.add_argument("--fuel", type=int, default=DEFAULT_FUEL, help="Replay fuel (blocks)")
    verify_cmd.add_argument("--report", type=Path, help="Report file (default: stdout)")

    candidates_cmd = sub.add_parser("candidates", help="List candidate blocks per statement")
    _add_inputs(candidates_cmd)
    candidates_cmd.add_argument("--cache-dir", default=None, help="Block summary cache directory")
    candidates_cmd.add_argument("--out", type=Path, help="Output file (default: stdout)")

    delta_cmd = sub.add_parser("delta", help="Render the delta graph of the first binding")
    _add_inputs(delta_cmd)
    delta_cmd.add_argument("-L", type=int, default=DEFAULT_L, help="Maximum dispatcher length")
    delta_cmd.add_argument("-N", type=int, default=1, help="Induced subgraphs to list")
    delta_cmd.add_argument("--cache-dir", default=None, help="Block summary cache directory")
    delta_cmd.add_argument("--emit-dot", type=Path, help="DOT file (default: stdout)")

    interpret_cmd = sub.add_parser("interpret", help="Run a payload on the reference interpreter")
    _add_inputs(interpret_cmd, target=False)
    interpret_cmd.add_argument("--stdin", type=Path, help="File fed to read(0, ...)")
    interpret_cmd.add_argument("--fuel", type=int, default=DEFAULT_FUEL, help="Statement fuel")

    bench_cmd = sub.add_parser("bench", help="Compile bundled payloads and report search counters")
    bench_cmd.add_argument("--target", required=True, type=Path, help="TIR target file")
    bench_cmd.add_argument("--entry", type=parse_int, default=None, help="Entry block id")
    bench_cmd.add_argument(
        "--payloads", nargs="+", default=None, help="Payload names or files (default: bundled)"
    )
    _add_bounds(bench_cmd)
    bench_cmd.add_argument("--out", type=Path, help="Output file (default: stdout)")
    return parser


def run_config(args: argparse.Namespace, payload: Path, solver: str) -> RunConfig:
    return RunConfig(
        payload=payload,
        target=args.target,
        entry=args.entry,
        P=args.P,
        L=args.L,
        N=args.N,
        K=args.K,
        timeout_ms=args.timeout_ms,
        fuel=args.fuel,
        jobs=args.jobs,
        solver=solver,
        cache_dir=resolve_cache_dir(args.cache_dir),
        out=getattr(args, "out", None),
        plan=getattr(args, "plan", None),
        report=getattr(args, "report", None),
        emit_dot=getattr(args, "emit_dot", None),
        trace_json=getattr(args, "trace_json", None),
        dump_candidates=getattr(args, "dump_candidates", None),
        dump_mapping=getattr(args, "dump_mapping", None),
    ).validate()


def write_artifacts(result: CompileResult, config: RunConfig) -> None:
    _write(config.out, result.writes.to_jsonl())
    if config.plan is not None:
        config.plan.write_text(dump_json(result.plan.to_json()), encoding="utf-8")
    if config.report is not None:
        report = result.report.as_dict()
        report["stats"] = result.stats.as_dict()
        report["subgraph"] = {"rank": result.subgraph.rank, "weight": result.subgraph.weight}
        config.report.write_text(dump_json(report), encoding="utf-8")
    if config.emit_dot is not None:
        config.emit_dot.write_text(delta_to_dot(result.dg, result.subgraph), encoding="utf-8")
    if config.trace_json is not None:
        config.trace_json.write_text(dump_json(result.solution.trace_json()), encoding="utf-8")
    if config.dump_candidates is not None:
        config.dump_candidates.write_text(dump_json(result.candidates.to_json()), encoding="utf-8")
    if config.dump_mapping is not None:
        config.dump_mapping.write_text(dump_json(result.binding.to_json()), encoding="utf-8")


def cmd_compile(args: argparse.Namespace, solver: str) -> int:
    payload = resolve_payload_path(args.payload)
    config = run_config(args, payload, solver)
    program = load_program(payload)
    target = load_target(config.target)
    result = compile_payload(program, target, config)
    write_artifacts(result, config)
    if not result.report.passed:
        logger.error("Compiled write-set failed verification")
        return EXIT_VERIFY_FAIL
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    program = load_program(resolve_payload_path(args.payload))
    target = load_target(args.target)
    ws = WriteSet.from_jsonl(_read_text(args.writes))
    try:
        plan = Plan.from_json(json.loads(_read_text(args.plan)))
    except (KeyError, TypeError, ValueError) as e:
        raise WriteSetError(f"malformed plan {args.plan}: {e}") from e
    entry = resolve_entry(target, args.entry if args.entry is not None else plan.entry)
    report = verify(target, ws, entry, program, plan, fuel=args.fuel)
    _write(args.report, dump_json(report.as_dict()))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def cmd_candidates(args: argparse.Namespace) -> int:
    program = load_program(resolve_payload_path(args.payload))
    target = load_target(args.target)
    summaries = load_summaries(target, resolve_cache_dir(args.cache_dir))
    candidates = collect_candidates(target, summaries, program)
    _write(args.out, dump_json(candidates.to_json()))
    return EXIT_OK


def cmd_delta(args: argparse.Namespace) -> int:
    program = load_program(resolve_payload_path(args.payload))
    target = load_target(args.target)
    entry = resolve_entry(target, args.entry)
    summaries = load_summaries(target, resolve_cache_dir(args.cache_dir))
    candidates = collect_candidates(target, summaries, program)
    binding = next(enumerate_bindings(candidates, target, summaries), None)
    if binding is None:
        raise PipelineFailure(
            FailureKind.NO_MAPPING, "every register mapping leaves a statement without functional blocks"
        )
    dg = build_delta_graph(build_statement_ir(program), binding, build_cfg(target), summaries, entry, args.L)
    ranked = induced_subgraphs(dg, args.N)
    for hk in ranked:
        logger.info(
            "Induced subgraph",
            extra={"context": {"rank": hk.rank, "weight": hk.weight, "blocks": [hex(b) for b in hk.blocks() if b >= 0]}},
        )
    _write(args.emit_dot, delta_to_dot(dg, ranked[0] if ranked else None))
    return EXIT_OK


def cmd_interpret(args: argparse.Namespace) -> int:
    program = load_program(resolve_payload_path(args.payload))
    stdin = args.stdin.read_bytes() if args.stdin is not None else b""
    result = interpret_spl(program, stdin, fuel=args.fuel)
    sys.stdout.buffer.write(result.stdout)
    sys.stdout.flush()
    logger.info(
        "Payload finished",
        extra={"context": {"exit": str(result.exit), "events": [e.name for e in result.events]}},
    )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, solver: str) -> int:
    target = load_target(args.target)
    names = args.payloads or [n for n in PAYLOAD_NAMES if n != "brainfuck"]
    rows = []
    summaries = None
    for name in names:
        payload = resolve_payload_path(name)
        config = run_config(args, payload, solver)
        if summaries is None:
            summaries = load_summaries(target, config.cache_dir)
        program = load_program(payload)
        started = time.perf_counter()
        row: dict = {"payload": name, "statements": len(program.statements)}
        try:
            result = compile_payload(program, target, config, summaries)
            row.update(status="ok" if result.report.passed else "verify-fail", **result.stats.as_dict())
        except PipelineFailure as e:
            row.update(status=e.kind.name, message=e.message)
        row["seconds"] = round(time.perf_counter() - started, 3)
        rows.append(row)
    _write(args.out, dump_json({"target": str(args.target), "results": rows}))
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and return its exit status."""
    args = build_parser().parse_args(argv)
    logger.info("Command started", extra={"context": {"command": args.command}})

    try:
        env = setup_environment()
        setup_tracing(env.trace_exporter, env.project_id)
    except (OSError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE

    try:
        with custom_span(f"cli.{args.command}"):
            if args.command == "compile":
                return cmd_compile(args, env.solver)
            if args.command == "verify":
                return cmd_verify(args)
            if args.command == "candidates":
                return cmd_candidates(args)
            if args.command == "delta":
                return cmd_delta(args)
            if args.command == "interpret":
                return cmd_interpret(args)
            return cmd_bench(args, env.solver)

    except SplSyntaxError as e:
        print(e.render(), file=sys.stderr)
        return EXIT_INPUT

    except INPUT_ERRORS as e:
        logger.error("Input error", extra={"context": {"error": str(e)}})
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    except PipelineFailure as e:
        logger.error(
            "Compilation failed",
            extra={"context": {"kind": e.kind.name, "statement": e.statement, "message": e.message}},
        )
        print(f"{e.kind.name} ({e.kind.description}): {e.message}", file=sys.stderr)
        return e.kind.exit_code

    except ValueError as e:
        logger.error(f"Usage error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    except BopForgeError as e:
        logger.error(f"Unexpected pipeline error: {e}", exc_info=True)
        return EXIT_UNEXPECTED

    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_UNEXPECTED


def workflow():
    sys.exit(run())


if __name__ == "__main__":
    workflow()
