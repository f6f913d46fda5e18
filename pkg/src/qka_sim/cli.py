"""Command-line front end.

Subcommands: ``run``, ``verify-table``, ``attack``, ``efficiency`` and
``selftest``. Exit codes: 0 success, 1 usage error, 2 protocol abort,
3 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .adversary import (
    AttackSpecError,
    EndpointCollusion,
    collusion_run,
    estimate_detection,
    parse_attack,
)
from .cluster import CodebookError, derived_codebook, round_acceptance, table_comparison
from .hashmod import (
    HashError,
    HashParams,
    KeyString,
    combine,
    hash_exponent,
    hash_key,
)
from .protocol import ConfigError, ProtocolConfig, Transcript, run_protocol
from .qcore import BasisKind, make_cluster_state, plus_state, product_state

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2
EXIT_SELFTEST = 3

SEED_ENV = "QKA_SIM_SEED"

# Worked example: five participants, pivot P3, three chunks per key.
WORKED_EXAMPLE = {
    "config": {"n": 5, "m": 3, "l_verify": 2, "pivot": 3},
    "keys": ["10,11,10", "00,01,01", "11,01,00", "11,10,11", "00,10,01"],
    "k_b": "10,10,11",
    "k_d": "11,00,10",
    "key": "10,11,01",
    "outcomes": ["C12", "C9", "C15"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the abort code
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# Efficiency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EfficiencyInput:
    """Bit accounting for one run: ``c`` key bits, ``q`` quantum, ``b`` classical."""

    n: int
    m: int
    l_verify: int
    c: int
    q: int
    b: int

    @classmethod
    def from_params(cls, n: int, m: int, l_verify: Optional[int] = None) -> EfficiencyInput:
        if n < 3 or n % 2 == 0:
            raise UsageError(f"n must be odd and >= 3, got {n}")
        if m < 1:
            raise UsageError(f"m must be >= 1, got {m}")
        l = m if l_verify is None else l_verify
        if l < 0:
            raise UsageError(f"l_verify must be >= 0, got {l}")
        # distributor: 6 qubits per state plus 6 decoys per state
        prepared = 6 * (m + l) + 6 * (m + l)
        # each of the (N-1)/2 hops per chain moves 4m qubits and 4m decoys
        relayed = (4 * m + 4 * m) * (n - 1) // 2
        return cls(n, m, l, 2 * m, prepared + relayed, 6 * m)

    @property
    def eta(self) -> Fraction:
        return Fraction(self.c, self.q + self.b)


def efficiency_report(n: int, m: int, l_verify: Optional[int] = None) -> dict:
    e = EfficiencyInput.from_params(n, m, l_verify)
    approx = Fraction(1, 2 * n)
    report = {
        "n": n,
        "m": m,
        "l_verify": e.l_verify,
        "c": e.c,
        "q": e.q,
        "b": e.b,
        "eta": str(e.eta),
        "eta_decimal": float(e.eta),
        "approximation": str(approx),
        "approximation_decimal": float(approx),
        "ratio_to_approximation": float(e.eta / approx),
    }
    if e.l_verify == m:
        closed = Fraction(1, 2 * n + 13)
        report["closed_form"] = "2m/(4mN+26m) = 1/(2N+13)"
        report["closed_form_value"] = str(closed)
        report["closed_form_matches"] = closed == e.eta
        # 2N/(2N+13) -> 1, so 1/(2N) is the large-N limit of the exact value
        report["approximation_note"] = (
            f"eta * 2N = {2 * n}/{2 * n + 13}; tends to 1 as N grows, "
            "so 1/(2N) holds asymptotically"
        )
        report["consistent_with_approximation"] = True
    return report


# --------------------------------------------------------------------------
# Selftest
# --------------------------------------------------------------------------


def _check_codebook() -> tuple[bool, str]:
    try:
        book = derived_codebook()
    except CodebookError as exc:
        return False, str(exc)
    states = np.array([e.state.amps for e in book.values()])
    gram = states.conj() @ states.T
    dev = float(np.max(np.abs(gram - np.eye(16))))
    indices = sorted(e.index for e in book.values())
    ok = dev < 1e-9 and indices == list(range(1, 17))
    return ok, f"16 masks, bijective={indices == list(range(1, 17))}, gram deviation {dev:.2e}"


def _check_correlations() -> tuple[bool, str]:
    c = make_cluster_state()
    z = round_acceptance(c, BasisKind.Z)
    x = round_acceptance(c, BasisKind.X, "corrected")
    lit = round_acceptance(c, BasisKind.X, "literal")
    plus = round_acceptance(product_state([plus_state()] * 6), BasisKind.Z)
    ok = abs(z - 1) < 1e-9 and abs(x - 1) < 1e-9 and abs(plus - 5 / 32) < 1e-9
    return ok, (
        f"|C> accept: Z {z:.6f}, X corrected {x:.6f}, X literal {lit:.6f} (informational); "
        f"|++++++> Z accept {plus:.6f}"
    )


def _check_golden() -> tuple[bool, str]:
    t = run_worked_example()
    got = {
        "key": t.result.get("key"),
        "k_b": str(t.extras["measurement"].k_b) if "measurement" in t.extras else None,
        "k_d": str(t.extras["measurement"].k_d) if "measurement" in t.extras else None,
        "outcomes": next(
            (r["outcomes"] for r in t.phases if r.get("check") == "cluster-frame"), None
        ),
    }
    bad = [k for k, v in got.items() if v != WORKED_EXAMPLE[k]]
    if bad:
        return False, "mismatch in " + ", ".join(f"{k}={got[k]!r}" for k in bad)
    return True, f"s = {got['key']}, outcomes {got['outcomes']}"


def _check_hash() -> tuple[bool, str]:
    rng = np.random.default_rng(2024)
    params = HashParams.xor_linear(6, rng)
    for _ in range(200):
        x, y = KeyString.random(3, rng), KeyString.random(3, rng)
        if combine(hash_key(x, params), hash_key(y, params)) != hash_key(x ^ y, params):
            return False, f"xor-linear homomorphism broken at {x}, {y}"
    me = HashParams.modexp(2, 11, 4)
    h3, h2, h5 = (hash_exponent(v, me) for v in (3, 2, 5))
    if combine(h3, h2) != h5 or h5.value != 10:
        return False, f"modexp worked values: H(3)*H(2)={combine(h3, h2).value}, H(5)={h5.value}"
    return True, "200 xor-linear pairs; modexp H(3)*H(2) = H(5) = 10 mod 11"


SELFTEST_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "codebook-soundness": _check_codebook,
    "correlations": _check_correlations,
    "worked-example": _check_golden,
    "hash-homomorphism": _check_hash,
}


def run_worked_example(seed: int = 0) -> Transcript:
    cfg = ProtocolConfig(**WORKED_EXAMPLE["config"], seed=seed)
    keys = [KeyString.parse(k) for k in WORKED_EXAMPLE["keys"]]
    return run_protocol(cfg, keys=keys)


def selftest() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in SELFTEST_CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure of that check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------


def replay(transcript_json: str) -> Transcript:
    """Re-execute a run from the config echo at the head of its transcript."""
    echo = json.loads(transcript_json)["config"]
    cfg = ProtocolConfig.from_dict(echo["protocol"])
    keys = [KeyString.parse(k) for k in echo["keys"]] if echo.get("keys") else None
    attack = parse_attack(echo["adversary"]) if echo.get("adversary") else None
    return run_protocol(cfg, attack, keys=keys)


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------


def _seed(args) -> Optional[int]:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return None
    try:
        value = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if value < 0:
        raise UsageError(f"{SEED_ENV} must be non-negative")
    return value


def _config(args, defaults: Optional[dict] = None) -> ProtocolConfig:
    data = dict(defaults or {})
    if args.config:
        try:
            data.update(ProtocolConfig.load(args.config).to_dict())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for flag, name in (("n", "n"), ("m", "m"), ("l_verify", "l_verify"), ("decoys", "decoys")):
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    pivot = getattr(args, "pivot", None)
    if pivot is not None:
        data["pivot"] = pivot if pivot == "random" else int(pivot)
    if args.config is None and {"n", "m"} - set(data):
        raise UsageError("give --config or both --n and --m")
    seed = _seed(args)
    if seed is not None:
        data["seed"] = seed
    if data.get("m") is not None and "l_verify" not in data:
        data["l_verify"] = None
    return ProtocolConfig.from_dict(data)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return value


def _pivot(text: str):
    if text == "random":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"pivot must be an integer or 'random', got {text!r}") from None


def _protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON protocol configuration")
    p.add_argument("--n", type=int, help="number of participants (odd, >= 3)")
    p.add_argument("--m", type=int, help="number of two-bit key chunks")
    p.add_argument("--l-verify", dest="l_verify", type=int, help="states spent on identity checks (default m)")
    p.add_argument("--decoys", type=int, help="decoys per padded subsequence")
    p.add_argument("--pivot", type=_pivot, help="pivot participant or 'random'")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, help=f"RNG seed (falls back to ${SEED_ENV})")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = _Parser(prog="qka-sim", description="Cluster-state multi-party key agreement simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="execute one protocol run")
    _protocol_flags(run)
    run.add_argument("--keys", nargs="+", metavar="KEY", help="per-participant keys, e.g. 10,11,10")
    run.add_argument("--adversary", metavar="NAME[:params]", help="attack to mount")
    run.add_argument("--out", metavar="PATH", help="write the transcript here")

    sub.add_parser("verify-table", parents=[common], help="compare the derived codebook with the printed table")

    attack = sub.add_parser("attack", parents=[common], help="Monte Carlo detection estimate")
    attack.add_argument("spec", nargs="?", metavar="NAME[:params]")
    attack.add_argument("--adversary", metavar="NAME[:params]", help="same as the positional spec")
    _protocol_flags(attack)
    attack.add_argument("--trials", type=int, default=10_000)
    attack.add_argument("--workers", type=int, default=1)
    attack.add_argument("--out", metavar="PATH", help="also write the JSON report here")

    eff = sub.add_parser("efficiency", parents=[common], help="quantum efficiency of one run")
    eff.add_argument("--n", type=int, required=True)
    eff.add_argument("--m", type=int, required=True)
    eff.add_argument("--l-verify", dest="l_verify", type=int)

    sub.add_parser("selftest", parents=[common], help="run the embedded acceptance checks")
    return parser


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _emit(text: str, out: Optional[str] = None) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    keys = [KeyString.parse(k) for k in args.keys] if args.keys else None
    attack = parse_attack(args.adversary) if args.adversary else None
    start = time.perf_counter()
    t = run_protocol(cfg, attack, keys=keys)
    elapsed = time.perf_counter() - start
    if args.out:
        Path(args.out).write_text(t.to_json())
    if args.json:
        summary = {"outcome": t.result, "transcript": args.out}
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    else:
        print(f"participants: {cfg.n}  chunks: {cfg.m}  pivot: P{t.extras['pivot']}")
        meas = t.extras.get("measurement")
        if meas is not None:
            labels = next(r["outcomes"] for r in t.phases if r.get("check") == "cluster-frame")
            print(f"cluster outcomes: {', '.join(labels)}")
            print(f"K_B = {meas.k_b}  K_D = {meas.k_d}")
        if t.succeeded:
            print(f's = "{t.key}"')
        else:
            r = t.result
            print(f"ABORT in {r['phase']} ({r['check']}), party {r['party']}: {r['reason']}")
        if args.out:
            print(f"transcript: {args.out}")
        print(f"elapsed: {elapsed:.3f} s", file=sys.stderr)
    return EXIT_OK if t.succeeded else EXIT_ABORT


def cmd_verify_table(args) -> int:
    rows = table_comparison()
    book = derived_codebook()
    bijective = sorted(e.index for e in book.values()) == list(range(1, 17))
    agree = sum(r["agree"] for r in rows)
    if args.json:
        report = {"rows": rows, "bijection": bijective, "agree": agree, "disagree": len(rows) - agree}
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
        return EXIT_OK
    print("K_B K_D  mask  table  derived  status")
    for r in rows:
        status = "AGREE" if r["agree"] else "DISAGREE (state list wins)"
        print(f"{r['kb']}  {r['kd']}   {r['mask']}  C{r['published']:<4}  C{r['derived']:<6} {status}")
    print(f"{len(rows)} rows, bijection {'confirmed' if bijective else 'BROKEN'}, "
          f"{agree} agree, {len(rows) - agree} disagree")
    return EXIT_OK


def cmd_attack(args) -> int:
    spec = args.spec or args.adversary
    if not spec:
        raise UsageError("attack needs a spec, e.g. intercept-resend")
    if args.spec and args.adversary and args.spec != args.adversary:
        raise UsageError("positional spec and --adversary disagree")
    if args.trials < 1000:
        raise UsageError(f"--trials must be >= 1000, got {args.trials}")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    attack = parse_attack(spec)
    cfg = _config(args, defaults={"n": 3, "m": 1})
    rng = np.random.default_rng(cfg.seed)
    if isinstance(attack, EndpointCollusion):
        text = collusion_run(cfg, args.trials, rng).to_json()
    else:
        text = estimate_detection(attack, cfg, args.trials, rng, workers=args.workers).to_json()
    _emit(text, args.out)
    return EXIT_OK


def cmd_efficiency(args) -> int:
    report = efficiency_report(args.n, args.m, args.l_verify)
    if args.json:
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
        return EXIT_OK
    print(f"c = {report['c']}  q = {report['q']}  b = {report['b']}")
    print(f"eta = {report['eta']} = {report['eta_decimal']:.6f}")
    if "closed_form" in report:
        print(f"closed form: {report['closed_form']} = {report['closed_form_value']}")
        print(f"1/(2N) = {report['approximation']} = {report['approximation_decimal']:.6f}; "
              f"{report['approximation_note']}")
    else:
        print(f"1/(2N) = {report['approximation']}; ratio {report['ratio_to_approximation']:.6f}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = selftest()
    if args.json:
        out = [{"check": n, "passed": ok, "detail": d} for n, ok, d in results]
        sys.stdout.write(json.dumps(out, indent=2) + "\n")
    else:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = [n for n, ok, _ in results if not ok]
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify-table": cmd_verify_table,
    "attack": cmd_attack,
    "efficiency": cmd_efficiency,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, AttackSpecError, HashError) as exc:
        print(f"qka-sim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
