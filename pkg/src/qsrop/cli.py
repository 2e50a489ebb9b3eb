"""Command-line entry point: ``qsrop <subcommand> [flags]``.

Every run writes line-delimited JSON: a manifest line, one line per trial or
report, and a trailing summary line.  The report goes to ``--out`` (stdout
when omitted); a short human-readable summary goes to stdout (stderr when
the report itself is on stdout).  Identical manifests give byte-identical
reports.

Exit codes: 0 success, 2 a verify-proof check failed, 64 usage error,
65 qubit cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import __version__
from .analysis import format_rows, markov_tail_check, paired_diagnostics, theorem_bounds
from .attacks import (
    AlwaysOne,
    ClassicalBaseline,
    FourierDistinguisher,
    GroverForgery,
    MauledTag,
    RandomGuess,
    RandomTag,
    Replay,
    WeakTagForgery,
    XorTest,
    fourier_attack,
    grover_first_max,
    grover_forgery,
)
from .experiments.estimate import ExperimentConfig, TrialError, estimate_advantage
from .qcore import QubitCapError
from .schemes import C1_PRIME, C2, SCHEME_IDS, SchemeError, Widths

EXIT_VERIFY = 2
EXIT_USAGE = 64
EXIT_CAP = 65

SUBCOMMANDS = ("qprf", "cpa", "cca", "attack-fourier", "attack-grover", "bounds", "verify-proof")

DEFAULTS = {
    "scheme": None,
    "family": "strong",
    "tag_family": "strong",
    "inner": C1_PRIME,
    "n_m": 4,
    "n_r": None,
    "n_s": None,
    "n_c": None,
    "n_tau": 4,
    "n_k": 32,
    "n": None,
    "q": 0,
    "q_e": None,
    "q_d": None,
    "eps": 0.1,
    "xi": None,
    "iterations": None,
    "trials": 1000,
    "seed": 0,
    "scenario": "q1",
    "delta": 1e-12,
    "strict_monitor": False,
    "adversary": None,
    "workers": None,
}

SUB_DEFAULTS = {
    "cpa": {"scheme": C1_PRIME, "adversary": "fourier"},
    "cca": {"scheme": C2, "adversary": "grover"},
    "qprf": {"adversary": "xor-test"},
    "attack-fourier": {"scheme": C1_PRIME, "trials": 4000},
    "attack-grover": {"n_tau": 8, "trials": 0},
    "bounds": {"q_e": 0, "q_d": 0},
    "verify-proof": {"scheme": C2, "n_m": 2, "n_tau": 6, "q_d": 4, "q_e": 0, "trials": 200, "adversary": "grover"},
}

ADVERSARIES = {
    "qprf": ("xor-test", "random-guess", "always-one"),
    "cpa": ("fourier", "classical", "random-guess", "always-one"),
    "cca": ("grover", "random-tag", "replay", "mauled-tag", "weak-tag-forgery", "classical", "random-guess", "always-one"),
}
ADVERSARIES["verify-proof"] = ADVERSARIES["cca"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    add = common.add_argument
    add("--config", help="JSON file of option values; flags override it")
    add("--scheme", choices=SCHEME_IDS, default=S)
    add("--family", choices=("strong", "weak"), default=S, help="encryption / QPRF family")
    add("--tag-family", dest="tag_family", choices=("strong", "weak"), default=S)
    add("--inner", choices=SCHEME_IDS[:3], default=S, help="inner scheme of construction 2")
    for flag in ("n-m", "n-r", "n-s", "n-c", "n-tau", "n-k"):
        add(f"--{flag}", dest=flag.replace("-", "_"), type=int, default=S)
    add("--n", type=int, default=S, help="QPRF input/output width (default n_m)")
    add("--q", type=int, default=S, help="QPRF query budget (bounds)")
    add("--q-e", dest="q_e", type=int, default=S)
    add("--q-d", dest="q_d", type=int, default=S)
    add("--eps", type=float, default=S)
    add("--xi", type=float, default=S)
    add("--iterations", type=int, default=S, help="Grover iterations (default: 0 .. first maximum)")
    add("--trials", type=int, default=S)
    add("--seed", type=int, default=S)
    add("--scenario", choices=("q0", "q1"), default=S)
    add("--delta", type=float, default=S, help="restriction-monitor weight threshold")
    add("--strict-monitor", dest="strict_monitor", action="store_true", default=S)
    add("--adversary", default=S)
    add("--out", default=S, help="report path (default stdout)")
    add("--workers", type=int, default=S)
    parser = _Parser(prog="qsrop", description="Simulate RoP security games under superposition queries.")
    parser.add_argument("--version", action="version", version=f"qsrop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve(command: str, flags: dict) -> dict:
    """Defaults, then subcommand defaults, then the config file, then flags."""
    opts = dict(DEFAULTS)
    opts.update(SUB_DEFAULTS.get(command, {}))
    path = flags.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                file_opts = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}")
        unknown = set(file_opts) - set(DEFAULTS) - {"out"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(file_opts)
    opts.update(flags)
    opts.setdefault("out", None)
    if opts["workers"] is None:
        opts["workers"] = os.cpu_count() or 1
    return opts


def _widths(o: dict) -> Widths:
    try:
        return Widths(n_m=o["n_m"], n_r=o["n_r"], n_s=o["n_s"], n_tau=o["n_tau"], n_k=o["n_k"])
    except SchemeError as exc:
        raise UsageError(str(exc))


def _check_n_c(o: dict, scheme: str, widths: Widths) -> None:
    if o["n_c"] is None:
        return
    core = o["inner"] if scheme == C2 or scheme == "construction-2-ideal" else scheme
    body = widths.n_m + (widths.n_r if core == C1_PRIME else widths.n_s)
    if o["n_c"] != body:
        raise UsageError(f"--n-c {o['n_c']} disagrees with the derived body width {body}")


def make_adversary(command: str, o: dict):
    name = o["adversary"]
    allowed = ADVERSARIES[command]
    if name not in allowed:
        raise UsageError(f"adversary {name!r} not available for {command}; choose from {allowed}")
    q_d = o["q_d"] if o["q_d"] is not None else 1
    q_e = o["q_e"] if o["q_e"] is not None else 0
    table = {
        "xor-test": lambda: XorTest(),
        "random-guess": lambda: RandomGuess(),
        "always-one": lambda: AlwaysOne(),
        "fourier": lambda: FourierDistinguisher(o["n_m"], o["n_r"]),
        "classical": lambda: ClassicalBaseline(o["scheme"]),
        "grover": lambda: GroverForgery(q_d=q_d, q_e=q_e),
        "random-tag": lambda: RandomTag(q_d),
        "replay": lambda: Replay(),
        "mauled-tag": lambda: MauledTag(),
        "weak-tag-forgery": lambda: WeakTagForgery(),
    }
    return table[name]()


def _config(command: str, o: dict) -> ExperimentConfig:
    widths = _widths(o)
    game = {"qprf": "qprf", "cpa": "rop-qscpa", "cca": "rop-qscca", "verify-proof": "rop-qscca"}[command]
    scheme = None if game == "qprf" else o["scheme"]
    if scheme is not None:
        _check_n_c(o, scheme, widths)
    try:
        return ExperimentConfig(
            game=game,
            scheme=scheme,
            family=o["family"],
            tag_family=o["tag_family"],
            inner=o["inner"],
            scenario=o["scenario"],
            trials=o["trials"],
            master_seed=o["seed"],
            widths=widths,
            n_in=o["n"],
            q_e=o["q_e"] if command != "verify-proof" else None,
            q_d=o["q_d"] if command != "verify-proof" else None,
            delta=o["delta"],
            strict=o["strict_monitor"],
        )
    except (ValueError, SchemeError) as exc:
        raise UsageError(str(exc))


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _run_estimate(command, o, lines, summary):
    cfg = _config(command, o)
    adv = make_adversary(command, o)
    est, arm1, arm0 = estimate_advantage(cfg, adv, workers=o["workers"], return_records=True)
    lines.extend(r.to_json() for r in arm1 + arm0)
    lines.append(est.to_json())
    summary.append(
        f"{command} {est.scheme} adversary={est.adversary}: advantage {est.advantage:+.4f} "
        f"+/- {est.half_width:.4f} (p1={est.p1_hat:.4f}, p0={est.p0_hat:.4f}, n={est.n1}/{est.n0}, "
        f"excluded={est.excluded1 + est.excluded0}, violations={est.violations})"
    )
    return 0


def _run_fourier(o, lines, summary):
    widths = _widths(o)
    _check_n_c(o, o["scheme"], widths)
    if o["scheme"] not in SCHEME_IDS[:3]:
        raise UsageError("attack-fourier targets a CPA scheme")
    report, arm1, arm0 = fourier_attack(
        o["scheme"], widths.n_m, widths.n_r, widths.n_s, o["trials"], o["seed"], o["family"], o["workers"], return_records=True
    )
    lines.extend(r.to_json() for r in arm1 + arm0)
    lines.append(report.to_json())
    summary.append(
        f"fourier vs {o['scheme']} (n_m={widths.n_m}): advantage {report.estimate:+.4f} +/- {report.half_width:.4f}, "
        f"b=1 always equal: {report.extra['b1_all_equal']}, excluded {report.extra['excluded']}"
    )
    return 0


def _run_grover(o, lines, summary):
    n_tau = o["n_tau"]
    iters = [o["iterations"]] if o["iterations"] is not None else range(grover_first_max(n_tau) + 1)
    worst = 0.0
    for i in iters:
        r = grover_forgery(n_tau, i, o["trials"], o["seed"])
        worst = max(worst, abs(r.estimate - r.theory))
        lines.append(r.to_json())
        summary.append(f"grover n_tau={n_tau} i={i}: success {r.estimate:.9f}, closed form {r.theory:.9f}")
    summary.append(f"max |simulated - closed form| = {worst:.3e}")
    return 0


def _run_bounds(o, lines, summary):
    try:
        r = theorem_bounds(o["eps"], o["q"], o["q_e"], o["q_d"], o["n_tau"], o["xi"])
    except ValueError as exc:
        raise UsageError(str(exc))
    lines.append(r.to_json())
    summary.append(
        f"QPRF bound eps/(2(q+1)) = {r.qprf_bound:.12g}; CCA slack = {r.cca_slack:.12g}; "
        f"claim term = {r.claim_term:.12g}; xi + tail = {r.additive_term:.12g}"
    )
    return 0


def _run_verify(o, lines, summary):
    cfg = _config("verify-proof", o)
    adv = make_adversary("verify-proof", o)
    diags = []
    failed = 0
    for t in range(cfg.trials):
        for b in (1, 0):
            d = paired_diagnostics(cfg, adv, b, t, o["xi"])
            diags.append(d)
            failed += not d.ok
            lines.append(d.to_json())
    tail = markov_tail_check(diags, cfg.widths.n_tau, adv.q_d, o["xi"])
    lines.append(_dumps({"type": "verify-summary", "pairs": len(diags), "failed": failed, "min_slack": min(d.min_slack for d in diags),
                         "tail_frequency": tail.frequency, "tail_bound": tail.bound, "xi": tail.xi}))
    worst = min(diags, key=lambda d: d.min_slack)
    summary.append(format_rows(worst.rows))
    summary.append(f"verify-proof: {len(diags) - failed}/{len(diags)} paired runs satisfy every inequality")
    return EXIT_VERIFY if failed else 0


def run_command(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    command = args.command
    try:
        o = resolve(command, flags)
        lines: list[str] = []
        summary: list[str] = []
        manifest = {"type": "manifest", "subcommand": command, "version": __version__, "master_seed": o["seed"],
                    "config": {k: o[k] for k in sorted(o) if k != "workers"}}
        if command in ("qprf", "cpa", "cca"):
            status = _run_estimate(command, o, lines, summary)
        elif command == "attack-fourier":
            status = _run_fourier(o, lines, summary)
        elif command == "attack-grover":
            status = _run_grover(o, lines, summary)
        elif command == "bounds":
            status = _run_bounds(o, lines, summary)
        else:
            status = _run_verify(o, lines, summary)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qsrop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QubitCapError as exc:
        print(f"qsrop: {exc}", file=sys.stderr)
        return EXIT_CAP
    except TrialError as exc:
        print(f"qsrop: {exc}", file=sys.stderr)
        return EXIT_CAP if isinstance(exc.error, QubitCapError) else 1
    report = "\n".join([_dumps(manifest)] + lines + [_dumps({"type": "summary", "text": summary})]) + "\n"
    if o["out"]:
        with open(o["out"], "w") as fh:
            fh.write(report)
        print("\n".join(summary))
    else:
        sys.stdout.write(report)
        print("\n".join(summary), file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
