"""
Command-line interface for qotp
"""

import argparse
import asyncio
import logging
import math
import pathlib
import sys

import numpy as np

from . import __version__
from .engine import (
    SIMULATE_MODE,
    TABLE_MODE,
    DecompositionUnavailable,
    GkGateSpec,
    LoopbackSession,
    evaluate_circuit,
    execute_gk_batch,
    load_circuit,
    randomize_circuit,
)
from .OtpConfig import OtpConfig
from .qsim import UnsupportedOrder, born_success, build_gate_density, input_index
from .reporting import Report
from .security import (
    AttackChannel,
    InsufficientLines,
    chsh_from_table,
    chsh_report,
    detection_probability,
    intercept_resend_attack,
    mark_test_lines,
    select_test_lines,
)
from .sig import (
    CheatModel,
    SignatureFile,
    SignatureParams,
    SigningKey,
    acceptance_rate,
    cheat_accept_probability,
    histogram_report,
    honest_accept_probability,
    load_signature,
    normal_accept_probability,
    optimize_threshold,
    save_signature,
    sign,
    simulate_signature_runs,
    verify,
)
from .tabler import (
    CalibrationEdgeNotFound,
    SharedTable,
    SharedTableAlice,
    SharedTableBob,
    TableFile,
    generate_tables,
    load_streams,
    load_table,
    reconcile_session,
    save_streams,
    save_table,
    simulate_session,
)
from .types import GateG1, MeasBasis
from .wire import ProtocolViolation, SessionAborted
from .wire.daemon import DaemonSettings, parse_address, request_signature, serve_signature
from .wire.messages import AbortReason

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_REJECT = 3
EXIT_USAGE = 64
EXIT_IO = 74

DEFAULT_CONFIG = "qotp.env"

ATTACKS = {
    "none": lambda: AttackChannel(),
    "intercept-zx": lambda: intercept_resend_attack(),
    "intercept-z": lambda: intercept_resend_attack(MeasBasis.Z),
    "intercept-x": lambda: intercept_resend_attack(MeasBasis.X),
}

logger = logging.getLogger("qotp")


class UsageParser(argparse.ArgumentParser):
    """argparse with the sysexits usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def valid_file_path(path):
    """Validate if the given path exists and is a file."""
    file_path = pathlib.Path(path)
    if not file_path.is_file():
        raise argparse.ArgumentTypeError(f"File not found: {path}")
    return str(file_path)


def bit(value):
    if value not in ("0", "1"):
        raise argparse.ArgumentTypeError(f"Expected 0 or 1, got {value}")
    return int(value)


def bit_string(value):
    if not value or any(c not in "01" for c in value):
        raise argparse.ArgumentTypeError(f"Expected a string of 0s and 1s, got {value}")
    return [int(c) for c in value]


def assignment(value):
    name, sep, b = value.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"Expected name=bit, got {value}")
    return name, bit(b)


def setup_logging(verbose=False):
    """Configure logging for the application."""
    log_level = logging.DEBUG if verbose else logging.INFO
    log_format = "%(levelname)s: %(message)s"

    logging.basicConfig(level=log_level, format=log_format, stream=sys.stderr)

    logger = logging.getLogger("qotp")
    logger.setLevel(log_level)
    logger.debug("Debug logging is enabled")
    return logger


def build_parser() -> argparse.ArgumentParser:
    presets = OtpConfig.get_presets()
    parser = UsageParser(
        description="""qotp - one-time programs from shared entanglement tables

qotp simulates the quantum phase of the protocol, reconciles the resulting
shared tables and runs gate-OTPs, circuits and delegated signatures on them.

Examples:
  qotp table generate --duration 10 --rate 10000 --noise paper-v0.955
  qotp bell-test --lines 5000
  qotp exec gate --gate not --input 0 --repeat 1000
  qotp analyze threshold --N 1000 --m 224 --p 0.831
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"qotp {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Enable verbose logging output"
    )
    parser.add_argument(
        "--config",
        type=valid_file_path,
        default=None,
        help=f"key=value configuration file (defaults to {DEFAULT_CONFIG} if present)",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    parser.add_argument("--alice-table", default=None, help="Alice's table file")
    parser.add_argument("--bob-table", default=None, help="Bob's table file")

    subparsers = parser.add_subparsers(dest="command", help="Command to execute", parser_class=UsageParser)

    subparsers.add_parser("presets", help="List the shipped noise presets")

    # table
    table_parser = subparsers.add_parser("table", help="Generate or reconcile shared tables")
    table_sub = table_parser.add_subparsers(dest="table_command", required=True, parser_class=UsageParser)
    generate = table_sub.add_parser(
        "generate",
        help="Simulate a session and write both table files",
        description="""Simulate the quantum phase and write the reconciled tables.

Examples:
  qotp table generate --duration 10 --rate 10000 --noise paper-v0.936
  qotp table generate --lines 2000000 --noise paper-v0.936
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    generate.add_argument("--duration", type=float, default=None, help="Session length in seconds")
    generate.add_argument("--rate", type=float, default=None, help="Pair rate in Hz")
    generate.add_argument("--noise", choices=presets, default=None, help="Noise preset")
    generate.add_argument(
        "--lines", type=int, default=None, help="Sample this many reconciled lines directly, without timestamps"
    )
    generate.add_argument("--side", choices=["both", "alice", "bob"], default="both")
    generate.add_argument("--streams", default=None, help="Also save the raw detection streams (.npz)")

    reconcile_parser = table_sub.add_parser("reconcile", help="Reconcile saved detection streams")
    reconcile_parser.add_argument("--streams", type=valid_file_path, required=True)

    # exec
    exec_parser = subparsers.add_parser("exec", help="Execute gate-OTPs on the shared tables")
    exec_sub = exec_parser.add_subparsers(dest="exec_command", required=True, parser_class=UsageParser)
    gate = exec_sub.add_parser("gate", help="Run one G_1 gate")
    gate.add_argument("--gate", required=True, help="const0, const1, id or not")
    gate.add_argument("--input", type=bit, required=True)
    gate.add_argument("--repeat", type=int, default=1, help="Independent executions")

    circuit = exec_sub.add_parser("circuit", help="Run a YAML circuit")
    circuit.add_argument("--file", type=valid_file_path, required=True)
    circuit.add_argument("--input", type=assignment, action="append", default=[], help="name=bit")
    circuit.add_argument("--runs", type=int, default=1)
    circuit.add_argument("--randomize", action="store_true", help="Pad internal wires with NOT pairs")
    circuit.add_argument("--gk-mode", choices=[TABLE_MODE, SIMULATE_MODE], default=TABLE_MODE)

    gk = exec_sub.add_parser("gk", help="Run one G_k gate")
    gk.add_argument("--k", type=int, required=True)
    gk.add_argument("--truth-table", type=bit_string, required=True, help="2^k bits, e.g. 0110")
    gk.add_argument("--input", type=bit_string, required=True, help="k bits, e.g. 10")
    gk.add_argument("--runs", type=int, default=1)
    gk.add_argument("--mode", choices=[TABLE_MODE, SIMULATE_MODE], default=TABLE_MODE)

    # signatures
    sign_parser = subparsers.add_parser("sign", help="Sign a message locally over both tables")
    sign_parser.add_argument("--message-file", type=valid_file_path, required=True)
    sign_parser.add_argument("--signature-file", default="signature.otps")

    verify_parser = subparsers.add_parser("verify", help="Verify a signature file")
    verify_parser.add_argument("--signature-file", type=valid_file_path, required=True)

    # security
    bell = subparsers.add_parser("bell-test", help="CHSH test on sacrificed table lines")
    bell.add_argument("--lines", type=int, default=5000)
    bell.add_argument("--test-seed", type=int, default=None)

    eve = subparsers.add_parser("eavesdrop", help="Detection probability of an attack")
    eve.add_argument("--attack", choices=sorted(ATTACKS), default="intercept-zx")
    eve.add_argument("--lines", type=int, default=5000)
    eve.add_argument("--trials", type=int, default=100)
    eve.add_argument("--noise", choices=presets, default=None)

    # analysis
    analyze = subparsers.add_parser("analyze", help="Signature acceptance analysis")
    analyze_sub = analyze.add_subparsers(dest="analyze_command", required=True, parser_class=UsageParser)
    threshold = analyze_sub.add_parser("threshold", help="Optimal threshold and acceptance probabilities")
    threshold.add_argument("--N", dest="n", type=int, default=None)
    threshold.add_argument("--m", type=int, default=None)
    threshold.add_argument("--p", type=float, default=0.831)
    threshold.add_argument("--q0", type=float, default=0.75)
    threshold.add_argument("--q1", type=float, default=0.75)
    threshold.add_argument("--multi-photon", type=float, default=0.0)
    threshold.add_argument("--tau", type=float, default=None)
    threshold.add_argument("--curves", action="store_true", help="Include the full curves")

    histogram = analyze_sub.add_parser("histogram", help="Per-bit success histogram over signing runs")
    histogram.add_argument("--runs", type=int, default=50)
    histogram.add_argument("--bins", type=int, default=20)
    histogram.add_argument("--noise", choices=presets, default=None)
    histogram.add_argument("--full-protocol", action="store_true")

    # daemons
    daemon = subparsers.add_parser(
        "daemon",
        help="Run a signing daemon",
        description="""Alice serves one signature over TCP; Bob connects and requests it.

Examples:
  qotp daemon --role alice
  qotp daemon --role bob --message-file contract.txt
""",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    daemon.add_argument("--role", choices=["alice", "bob"], default=None)
    daemon.add_argument("--message-file", type=valid_file_path, default=None)
    daemon.add_argument("--signature-file", default="signature.otps")
    daemon.add_argument("--test-lines", type=int, default=0, help="Bell test lines (Alice)")
    return parser


def load_config(args) -> OtpConfig:
    path = args.config
    if path is None and pathlib.Path(DEFAULT_CONFIG).is_file():
        path = DEFAULT_CONFIG
    config = OtpConfig.from_file(path)
    if args.seed is not None:
        config.seed = args.seed
    if args.alice_table:
        config.alice_table = args.alice_table
    if args.bob_table:
        config.bob_table = args.bob_table
    if getattr(args, "noise", None):
        config.noise = args.noise
    return config


def _load_alice(config: OtpConfig) -> SharedTableAlice:
    table = load_table(config.alice_table)
    if not isinstance(table, SharedTableAlice):
        raise TableFile.FormatError(f"{config.alice_table} is not Alice's table")
    return table


def _load_bob(config: OtpConfig) -> SharedTableBob:
    table = load_table(config.bob_table)
    if not isinstance(table, SharedTableBob):
        raise TableFile.FormatError(f"{config.bob_table} is not Bob's table")
    return table


def _save_tables(config: OtpConfig, alice: SharedTable | None, bob: SharedTable | None) -> None:
    if alice is not None:
        save_table(alice, config.alice_table)
    if bob is not None:
        save_table(bob, config.bob_table)


def _signature_params(config: OtpConfig) -> SignatureParams:
    return SignatureParams(n=config.sig_n, m=config.sig_m, tau=config.sig_tau)


def _loopback(config: OtpConfig, alice, bob, audit: bool = True) -> LoopbackSession:
    return LoopbackSession(
        alice, bob, seed=config.seed, constant_round_factor=config.constant_round_factor, audit=audit
    )


def run_presets_command(args, config: OtpConfig) -> int:
    report = Report(
        "presets",
        presets={name: OtpConfig.parse_preset(name) for name in OtpConfig.get_presets()},
    )
    report.note(f"{len(report.data['presets'])} noise presets available")
    report.emit()
    return EXIT_OK


def run_table_command(args, config: OtpConfig) -> int:
    params = config.session_params()
    if args.table_command == "reconcile":
        alice_stream, bob_stream = load_streams(args.streams)
        report = Report("table reconcile", streams=args.streams)
    else:
        updates = {}
        if args.duration is not None:
            updates["duration"] = args.duration
        if args.rate is not None:
            updates["pair_rate"] = args.rate
        params = params.model_copy(update=updates)
        report = Report("table generate", noise=config.noise, side=args.side)
        if args.lines is not None:
            alice, bob = generate_tables(
                args.lines, params.noise, np.random.default_rng(config.seed), seed=config.seed
            )
            report.add(mode="direct", lines=len(alice))
            report.note(f"Sampled {len(alice)} table lines directly")
            _save_tables(
                config,
                alice if args.side != "bob" else None,
                bob if args.side != "alice" else None,
            )
            report.add(alice_table=config.alice_table, bob_table=config.bob_table)
            report.emit()
            return EXIT_OK
        session = simulate_session(params)
        alice_stream, bob_stream = session.alice, session.bob
        report.add(mode="session", duration=params.duration, rate=params.pair_rate)
        report.add(expected_lines=params.expected_table_lines())
        if args.streams:
            save_streams(args.streams, alice_stream, bob_stream)
            report.add(streams=args.streams)

    reconciled = reconcile_session(alice_stream, bob_stream, params)
    side = getattr(args, "side", "both")
    _save_tables(
        config,
        reconciled.alice if side != "bob" else None,
        reconciled.bob if side != "alice" else None,
    )
    report.add(
        reconcile=reconciled.report,
        injected_offset_ps=params.clock_offset,
        offset_error_ps=reconciled.report.offset_ps - params.clock_offset,
        alice_table=config.alice_table,
        bob_table=config.bob_table,
    )
    report.note(
        f"{reconciled.report.lines} lines, matched fraction {reconciled.report.matched_fraction:.4f}"
    )
    report.emit()
    return EXIT_OK


def run_exec_gate(args, config: OtpConfig) -> int:
    if args.repeat < 1:
        raise ValueError("--repeat must be at least 1")
    gate = GateG1.from_name(args.gate)
    alice, bob = _load_alice(config), _load_bob(config)
    session = _loopback(config, alice, bob, audit=False)
    result = session.run(np.full(args.repeat, int(gate)), np.full(args.repeat, args.input))
    _save_tables(config, alice, bob)
    outputs = result.outputs[~result.failed]
    expected = gate.evaluate(args.input)
    report = Report(
        "exec gate",
        gate=gate.name.lower(),
        input=args.input,
        expected=expected,
        executions=args.repeat,
        completed=result.completed,
        failed=int(result.failed.sum()),
        rounds=result.rounds_used,
        frequency_one=float(np.mean(outputs == 1)) if len(outputs) else 0.0,
        success_rate=float(np.mean(outputs == expected)) if len(outputs) else 0.0,
    )
    if args.repeat == 1 and len(outputs):
        report.add(output=int(outputs[0]))
    report.note(f"{gate.name}({args.input}): success rate {report.data['success_rate']:.4f}")
    report.emit()
    return EXIT_ABORT if result.failed.any() else EXIT_OK


def run_exec_circuit(args, config: OtpConfig) -> int:
    circuit = load_circuit(args.file)
    given = dict(args.input)
    missing = [name for name in circuit.inputs if name not in given]
    if missing:
        raise ValueError(f"Missing circuit inputs: {', '.join(missing)}")
    rng = np.random.default_rng(config.seed)
    padded = randomize_circuit(circuit, rng) if args.randomize else circuit
    alice, bob = _load_alice(config), _load_bob(config)
    session = _loopback(config, alice, bob, audit=False)
    values = {name: np.full(args.runs, given[name], dtype=np.uint8) for name in circuit.inputs}
    try:
        run = evaluate_circuit(padded, values, session, gk_mode=args.gk_mode, rng=rng)
    finally:
        _save_tables(config, alice, bob)
    expected = circuit.evaluate_plain(given)
    report = Report(
        "exec circuit",
        file=args.file,
        inputs=given,
        runs=args.runs,
        randomized=args.randomize,
        expected={w: expected[w] for w in circuit.outputs},
        frequency_one={w: float(np.mean(v)) for w, v in run.outputs.items()},
        success_rate={w: float(np.mean(v == expected[w])) for w, v in run.outputs.items()},
        rounds=run.rounds,
    )
    report.note(f"Evaluated {len(circuit.gates)} gates x {args.runs} runs in {run.rounds} rounds")
    report.emit()
    return EXIT_OK


def run_exec_gk(args, config: OtpConfig) -> int:
    spec = GkGateSpec(k=args.k, truth_table=args.truth_table)
    if len(args.input) != args.k:
        raise ValueError(f"--input needs {args.k} bits")
    rng = np.random.default_rng(config.seed)
    xs = np.tile(np.asarray(args.input, dtype=np.uint8), (args.runs, 1))
    alice = bob = session = None
    if args.mode == TABLE_MODE:
        alice, bob = _load_alice(config), _load_bob(config)
        session = _loopback(config, alice, bob, audit=False)
    visibility = OtpConfig.parse_preset(config.noise).visibility
    try:
        outputs, rounds = execute_gk_batch(spec, xs, session, args.mode, rng, visibility)
    finally:
        _save_tables(config, alice, bob)
    expected = spec.evaluate(args.input)
    report = Report(
        "exec gk",
        k=args.k,
        truth_table="".join(map(str, args.truth_table)),
        input="".join(map(str, args.input)),
        mode=args.mode,
        runs=args.runs,
        expected=expected,
        rounds=rounds,
        success_rate=float(np.mean(outputs == expected)),
    )
    if args.k <= 3:
        rho = build_gate_density(args.k, args.truth_table)
        report.add(ideal_success=born_success(rho, input_index(args.input)))
    report.note(f"G_{args.k} success rate {report.data['success_rate']:.4f} over {args.runs} runs")
    report.emit()
    return EXIT_OK


def run_sign_command(args, config: OtpConfig) -> int:
    params = _signature_params(config)
    key = SigningKey.generate(params, config.key_seed)
    message = pathlib.Path(args.message_file).read_bytes()
    alice, bob = _load_alice(config), _load_bob(config)
    session = _loopback(config, alice, bob, audit=False)
    try:
        signature = sign(message, params, session, key)
    finally:
        _save_tables(config, alice, bob)
    save_signature(signature, args.signature_file)
    result = verify(message, signature, key)
    report = Report(
        "sign",
        message_file=args.message_file,
        signature_file=args.signature_file,
        n=params.n,
        m=params.m,
        tau=params.tau,
        rounds=session.rounds_total,
        accepted=result.accepted,
        min_fraction=result.min_fraction,
        mean_fraction=float(np.mean(result.fractions)),
    )
    report.note(f"Signature {'accepted' if result.accepted else 'rejected'}, worst bit {result.min_fraction:.4f}")
    report.emit()
    return EXIT_OK if result.accepted else EXIT_REJECT


def run_verify_command(args, config: OtpConfig) -> int:
    signature = load_signature(args.signature_file, tau=config.sig_tau)
    key = SigningKey.generate(signature.params, config.key_seed)
    result = verify(signature.message, signature, key)
    report = Report(
        "verify",
        signature_file=args.signature_file,
        n=signature.params.n,
        m=signature.params.m,
        tau=result.tau,
        accepted=result.accepted,
        min_fraction=result.min_fraction,
        mean_fraction=float(np.mean(result.fractions)),
    )
    report.note(f"Signature {'accepted' if result.accepted else 'rejected'}")
    report.emit()
    return EXIT_OK if result.accepted else EXIT_REJECT


def run_bell_test_command(args, config: OtpConfig) -> int:
    alice, bob = _load_alice(config), _load_bob(config)
    test_seed = config.seed if args.test_seed is None else args.test_seed
    ids = select_test_lines(alice, args.lines, test_seed)
    estimate = chsh_from_table(alice, bob, ids)
    mark_test_lines(alice, bob, ids)
    _save_tables(config, alice, bob)
    chsh = chsh_report(estimate, config.chsh_abort_below)
    report = Report("bell-test", lines=args.lines, test_seed=test_seed, chsh=chsh)
    report.note(f"S = {estimate.s:.3f} +- {estimate.std_error:.3f}: {chsh.verdict}")
    report.emit()
    return EXIT_OK if chsh.verdict == "secure" else EXIT_ABORT


def run_eavesdrop_command(args, config: OtpConfig) -> int:
    noise = OtpConfig.parse_preset(config.noise)
    detection = detection_probability(
        noise,
        ATTACKS[args.attack](),
        args.lines,
        args.trials,
        threshold=config.chsh_abort_below,
        rng=np.random.default_rng(config.seed),
    )
    report = Report("eavesdrop", attack=args.attack, noise=config.noise, detection=detection)
    report.note(f"{args.attack}: detected in {detection.detected}/{detection.trials} Bell tests")
    report.emit()
    return EXIT_OK


def run_analyze_command(args, config: OtpConfig) -> int:
    if args.analyze_command == "threshold":
        n = config.sig_n if args.n is None else args.n
        m = config.sig_m if args.m is None else args.m
        tau = config.sig_tau if args.tau is None else args.tau
        model = CheatModel(q0=args.q0, q1=args.q1, p_honest=args.p, multi_photon_fraction=args.multi_photon)
        analysis = optimize_threshold(n, m, args.p, model)
        report = Report(
            "analyze threshold",
            n=n,
            m=m,
            p=args.p,
            q0=args.q0,
            q1=args.q1,
            multi_photon_fraction=args.multi_photon,
            tau_star=analysis.tau,
            max_difference=analysis.difference,
            honest_at_tau_star=analysis.honest,
            cheat_at_tau_star=analysis.cheat,
            tau=tau,
            honest=honest_accept_probability(n, m, tau, args.p),
            cheat=cheat_accept_probability(n, m, tau, model),
            honest_discrete=honest_accept_probability(n, m, tau, args.p, continuity=False),
            cheat_discrete=cheat_accept_probability(n, m, tau, model, continuity=False),
            honest_normal=normal_accept_probability(n, m, tau, args.p, math.sqrt(args.p * (1 - args.p) / n)),
        )
        if args.curves:
            report.add(taus=analysis.taus, honest_curve=analysis.honest_curve, cheat_curve=analysis.cheat_curve)
        report.note(f"tau* = {analysis.tau:.4f}, honest {analysis.honest:.6f}, cheat {analysis.cheat:.6g}")
        report.emit()
        return EXIT_OK

    params = _signature_params(config)
    noise = OtpConfig.parse_preset(config.noise)
    fractions = simulate_signature_runs(
        args.runs, params, noise, seed=config.seed, full_protocol=args.full_protocol
    )
    histogram = histogram_report(fractions, params.n, bins=args.bins)
    rate = acceptance_rate(fractions, params)
    report = Report(
        "analyze histogram",
        noise=config.noise,
        full_protocol=args.full_protocol,
        tau=params.tau,
        acceptance_rate=rate,
        histogram=histogram,
    )
    report.note(f"{args.runs} runs: mean {histogram.mean:.4f}, sigma {histogram.std:.4f}, accepted {rate:.2%}")
    report.emit()
    return EXIT_OK


def _daemon_settings(args, config: OtpConfig) -> DaemonSettings:
    return DaemonSettings(
        keepalive=config.keepalive_s or None,
        max_payload=config.max_frame_bytes,
        seed=config.seed,
        test_lines=args.test_lines,
        test_seed=config.seed,
        chsh_abort_below=config.chsh_abort_below,
        constant_round_factor=config.constant_round_factor,
    )


def run_daemon_command(args, config: OtpConfig) -> int:
    role = args.role or config.role
    params = _signature_params(config)
    settings = _daemon_settings(args, config)
    if role == "alice":
        table = _load_alice(config)
        host, port = parse_address(config.listen)
        key = SigningKey.generate(params, config.key_seed)
        try:
            outcome = asyncio.run(serve_signature(host, port, table, key, settings))
        finally:
            _save_tables(config, table, None)
        report = Report(
            "daemon",
            role=role,
            accepted=outcome.verification.accepted,
            min_fraction=outcome.verification.min_fraction,
            rounds=outcome.rounds,
            chsh=outcome.chsh,
        )
        report.note(f"Served one signature: {'accepted' if outcome.verification.accepted else 'rejected'}")
        report.emit()
        return EXIT_OK if outcome.verification.accepted else EXIT_REJECT

    if args.message_file is None:
        raise ValueError("Bob needs --message-file")
    table = _load_bob(config)
    host, port = parse_address(config.connect)
    message = pathlib.Path(args.message_file).read_bytes()
    try:
        signature, result = asyncio.run(request_signature(host, port, table, message, params, settings))
    finally:
        _save_tables(config, None, table)
    save_signature(signature, args.signature_file)
    report = Report(
        "daemon",
        role=role,
        signature_file=args.signature_file,
        accepted=result.accepted,
        min_fraction=result.min_fraction,
    )
    report.note(f"Signature accepted, worst bit {result.min_fraction:.4f}")
    report.emit()
    return EXIT_OK


EXEC_COMMANDS = {"gate": run_exec_gate, "circuit": run_exec_circuit, "gk": run_exec_gk}


def dispatch(args, config: OtpConfig) -> int:
    if args.command == "presets":
        return run_presets_command(args, config)
    if args.command == "table":
        return run_table_command(args, config)
    if args.command == "exec":
        return EXEC_COMMANDS[args.exec_command](args, config)
    if args.command == "sign":
        return run_sign_command(args, config)
    if args.command == "verify":
        return run_verify_command(args, config)
    if args.command == "bell-test":
        return run_bell_test_command(args, config)
    if args.command == "eavesdrop":
        return run_eavesdrop_command(args, config)
    if args.command == "analyze":
        return run_analyze_command(args, config)
    if args.command == "daemon":
        return run_daemon_command(args, config)
    raise ValueError(f"Unknown command {args.command}")


def main(args=None):
    """Main entry point for the CLI."""
    if args is None:
        args = sys.argv[1:]

    parser = build_parser()
    args = parser.parse_args(args)
    logger = setup_logging(args.verbose)

    if not args.command:
        parser.print_help(sys.stderr)
        sys.exit(EXIT_USAGE)

    try:
        config = load_config(args)
        code = dispatch(args, config)
    except SessionAborted as e:
        logger.error(f"Session aborted: {e}")
        code = EXIT_REJECT if e.reason == AbortReason.THRESHOLD_FAILURE else EXIT_ABORT
    except (
        ProtocolViolation,
        SharedTable.TableExhausted,
        InsufficientLines,
        DecompositionUnavailable,
        CalibrationEdgeNotFound,
    ) as e:
        logger.error(f"Protocol abort: {e}")
        code = EXIT_ABORT
    except (OSError, TableFile.FormatError, SignatureFile.FormatError) as e:
        logger.error(f"I/O error: {e}")
        code = EXIT_IO
    except (OtpConfig.InvalidConfig, UnsupportedOrder, ValueError) as e:
        logger.error(f"Error: {e}")
        code = EXIT_USAGE
    sys.exit(code)


if __name__ == "__main__":
    main()
