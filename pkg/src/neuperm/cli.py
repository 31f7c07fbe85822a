"""Command-line front end.

Subcommands:

* ``sanitize`` — rewrite a weight file with a disruptor, optionally
  verifying function preservation against the model's net sidecar first.
* ``attack``   — embed a payload file into a weight file (lsb / sign / ss)
  and write a plan file describing how to extract it again.
* ``evaluate`` — replay extraction against disrupted variants of a carrier
  and write one CSV row per attempt.
* ``bound``    — closed-form payload-survival bound, optionally checked by
  Monte-Carlo simulation.

Exit codes: 0 success, 1 malformed input or usage, 2 verification failure,
3 capacity violation, 4 bound refused (inapplicable hypothesis or a regime
the rewrite cannot constrain). Commands that take ``--seed`` draw one from
os.urandom when it is omitted; either way the seed lands in the manifest,
so any run can be replayed bit-for-bit.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from .analysis import (
    d_from_site_sizes,
    effective_protected_bits,
    simulate_extraction_game,
    success_bound_ecc,
    success_bound_no_ecc,
)
from .archive import archive_digest, load_archive, save_archive
from .descriptor import load_descriptor
from .disrupt import apply_disruptor, parse_disruptor
from .errors import (
    BoundInapplicableError,
    CapacityError,
    DescriptorError,
    IneffectiveRegimeError,
    ParseError,
    VerificationError,
)
from .inference import load_network, normalized_output_deviation, random_inputs
from .rng import derive_seed
from .stego import (
    ChipPlan,
    host_vector,
    lsb_embed,
    lsb_extract,
    make_chip_plan,
    parse_ecc,
    sign_embed,
    sign_extract,
    ss_despread_many,
    ss_embed,
    decode_correlations,
)

_F32_TOL = 1e-5
_F16_TOL = 1e-3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for
    verification failures, so usage problems are remapped to 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int.from_bytes(os.urandom(8), "little")


def _write_manifest(path, command: str, argv, seed, inputs, outputs, details) -> None:
    doc = {
        "tool": "neuperm",
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "inputs": {p: _sha256_file(p) for p in inputs},
        "outputs": {p: _sha256_file(p) for p in outputs},
        "details": details,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------- sanitize

def _verify_preserved(net_path, original, rewritten, seed: int, probes: int) -> float:
    net = load_network(net_path)
    tol = _F16_TOL if any(t.dtype == "float16" for t in original.tensors.values()) else _F32_TOL
    inputs = random_inputs(net, probes, derive_seed(seed, "verify/probes"))
    dev = normalized_output_deviation(net, original, rewritten, inputs)
    if dev > tol:
        raise VerificationError(
            f"outputs diverged: max normalized deviation {dev:.3e} exceeds "
            f"{tol:.0e} over {probes} probes"
        )
    return dev


def cmd_sanitize(args, argv) -> int:
    archive = load_archive(args.input)
    config = parse_disruptor(args.disrupt)
    descriptor = None
    if args.descriptor:
        descriptor = load_descriptor(args.descriptor, archive)
    seed = _resolve_seed(args)
    result, coverage = apply_disruptor(
        archive, config, seed=seed, descriptor=descriptor
    )

    deviation = None
    if args.verify:
        net_path = args.net or args.input + ".net.json"
        if not os.path.exists(net_path):
            print(f"error: no net sidecar at {net_path}", file=sys.stderr)
            return 1
        deviation = _verify_preserved(net_path, archive, result, seed, args.probes)

    save_archive(result, args.output)
    details = {"disrupt": config.spec, "output_digest": archive_digest(result)}
    if coverage is not None:
        details["coverage"] = {
            "total_params": coverage.total_params,
            "changed_params": coverage.changed_params,
            "fraction": coverage.fraction,
            "percent": coverage.percent,
            "applied_sites": list(coverage.applied_sites),
        }
    if deviation is not None:
        details["verify_max_deviation"] = deviation
    if args.manifest:
        _write_manifest(
            args.manifest, "sanitize", argv, seed, [args.input], [args.output], details
        )
    line = f"sanitize {config.spec} seed={seed}"
    if coverage is not None:
        line += f" coverage={coverage.percent:.2f}%"
    if deviation is not None:
        line += f" verified(max_dev={deviation:.3e})"
    print(line)
    return 0


# --------------------------------------------------------------- attack

def _parse_attack_spec(spec: str):
    kind, sep, arg = spec.strip().partition(":")
    if kind == "sign":
        if sep:
            raise ValueError("sign attack takes no parameter")
        return "sign", None
    if kind == "lsb":
        bpp = int(arg) if sep else 1
        return "lsb", bpp
    if kind == "ss":
        if not sep:
            raise ValueError("ss attack needs a gamma, e.g. ss:0.009")
        return "ss", float(arg)
    raise ValueError(f"unknown attack spec {spec!r}")


def cmd_attack(args, argv) -> int:
    archive = load_archive(args.input)
    with open(args.payload, "rb") as fh:
        payload = fh.read()
    if not payload:
        print("error: payload file is empty", file=sys.stderr)
        return 1
    kind, param = _parse_attack_spec(args.attack)
    ecc = parse_ecc(args.ecc)
    seed = _resolve_seed(args)

    plan: dict = {
        "method": kind,
        "seed": seed,
        "ecc": ecc.spec,
        "payload_b64": base64.b64encode(payload).decode("ascii"),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "payload_len": len(payload),
    }
    if kind == "lsb":
        carrier = lsb_embed(archive, payload, bits_per_param=param, seed=seed, ecc=ecc)
        plan["bits_per_param"] = param
    elif kind == "sign":
        carrier = sign_embed(archive, payload, seed=seed, ecc=ecc)
    else:
        chip_plan = make_chip_plan(archive, payload, gamma=param, seed=seed, ecc=ecc)
        carrier = ss_embed(archive, payload, chip_plan)
        plan["ss"] = chip_plan.to_dict()

    save_archive(carrier, args.output)
    if args.plan:
        with open(args.plan, "w", encoding="utf-8") as fh:
            json.dump(plan, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.manifest:
        _write_manifest(
            args.manifest, "attack", argv, seed,
            [args.input, args.payload], [args.output],
            {"attack": args.attack, "ecc": ecc.spec,
             "payload_sha256": plan["payload_sha256"],
             "output_digest": archive_digest(carrier)},
        )
    print(f"attack {args.attack} ecc={ecc.spec} seed={seed} payload={len(payload)}B")
    return 0


# ------------------------------------------------------------- evaluate

def _extract_for_plan(plan: dict, archive) -> tuple[bytes, float | None]:
    ecc = parse_ecc(plan["ecc"])
    if plan["method"] == "lsb":
        got = lsb_extract(
            archive, plan["payload_len"],
            bits_per_param=plan["bits_per_param"], seed=plan["seed"], ecc=ecc,
        )
        return got, None
    if plan["method"] == "sign":
        got = sign_extract(
            archive, plan["payload_len"], seed=plan["seed"], ecc=ecc
        )
        return got, None
    raise ValueError(f"plan method {plan['method']!r} is not extractable here")


def _variant_specs(configs, trials: int, seed: int):
    """(config, variant_seed, param_label) triples; deterministic disruptors
    collapse to a single variant regardless of the trial count."""
    out = []
    for config in configs:
        stochastic = config.kind in ("noise", "neuperm")
        count = trials if stochastic else 1
        for i in range(count):
            out.append(
                (config, derive_seed(seed, f"eval/{config.spec}/{i}"), config.value)
            )
    return out


def cmd_evaluate(args, argv) -> int:
    archive = load_archive(args.carrier)
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = json.load(fh)
    configs = [parse_disruptor(s) for s in args.disrupt]
    if not configs:
        print("error: at least one --disrupt is required", file=sys.stderr)
        return 1
    descriptor = None
    if args.descriptor:
        descriptor = load_descriptor(args.descriptor, archive)
    seed = _resolve_seed(args)
    expected_sha = plan["payload_sha256"]
    variants = _variant_specs(configs, args.trials, seed)

    rows = []
    if plan["method"] == "ss":
        chip_plan = ChipPlan.from_dict(plan["ss"])
        hosts = np.empty((len(variants), chip_plan.host_n), dtype=np.float32)
        for i, (config, vseed, _) in enumerate(variants):
            variant, _ = apply_disruptor(
                archive, config, seed=vseed, descriptor=descriptor
            )
            hosts[i] = host_vector(variant, chip_plan.eligible)
        correlations = ss_despread_many(hosts, chip_plan)
        del hosts
        for (config, _, param), y in zip(variants, correlations):
            got, reading = decode_correlations(y, chip_plan)
            ok = int(hashlib.sha256(got).hexdigest() == expected_sha)
            rows.append((config.kind, param, f"{reading.snr_db:.4f}", ok))
    else:
        for config, vseed, param in variants:
            variant, _ = apply_disruptor(
                archive, config, seed=vseed, descriptor=descriptor
            )
            got, _ = _extract_for_plan(plan, variant)
            ok = int(hashlib.sha256(got).hexdigest() == expected_sha)
            rows.append((config.kind, param, "", ok))

    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,param,snr_db,extraction_success\n")
        for method, param, snr, ok in rows:
            fh.write(f"{method},{param:g},{snr},{ok}\n")
    if args.manifest:
        _write_manifest(
            args.manifest, "evaluate", argv, seed,
            [args.carrier, args.plan], [args.output],
            {"disrupt": [c.spec for c in configs], "trials": args.trials,
             "attempts": len(rows),
             "successes": sum(r[3] for r in rows)},
        )
    print(f"evaluate {len(rows)} attempts, {sum(r[3] for r in rows)} extractions succeeded")
    return 0


# ---------------------------------------------------------------- bound

def cmd_bound(args, argv) -> int:
    sizes = None
    if args.site_sizes:
        sizes = [int(s) for s in args.site_sizes.split(",") if s.strip()]
        if not sizes or any(n < 1 for n in sizes):
            print("error: --site-sizes needs positive integers", file=sys.stderr)
            return 1
    if (args.d is None) == (sizes is None):
        print("error: give exactly one of --d or --site-sizes", file=sys.stderr)
        return 1
    d = args.d if args.d is not None else d_from_site_sizes(sizes)

    if args.L is not None:
        if args.L_prime is not None or args.L_total is not None or args.L_np is not None:
            print("error: --L conflicts with --L-prime/--L-total/--L-np", file=sys.stderr)
            return 1
        L = args.L
    else:
        parts = (args.L_prime, args.L_total, args.L_np)
        if any(p is None for p in parts):
            print("error: give --L or all of --L-prime, --L-total, --L-np", file=sys.stderr)
            return 1
        L = effective_protected_bits(*parts)

    delta = args.delta
    if args.ecc is not None:
        if delta is not None:
            print("error: --delta conflicts with --ecc", file=sys.stderr)
            return 1
        delta = parse_ecc(args.ecc).delta
    if delta is None:
        delta = 0.0

    bound = (
        success_bound_no_ecc(d, L) if delta == 0.0 else success_bound_ecc(d, delta, L)
    )
    print(f"success_bound {bound:.6e} (d={d:g}, delta={delta:g}, L={L})")

    details = {"d": d, "delta": delta, "L": L, "bound": bound}
    if args.simulate:
        if sizes is None:
            print("error: --simulate needs --site-sizes for the game geometry",
                  file=sys.stderr)
            return 1
        seed = _resolve_seed(args)
        result = simulate_extraction_game(min(sizes), L, delta, args.simulate, seed)
        print(
            f"simulated {result.successes}/{result.trials} successes "
            f"(rate {result.rate:.6g})"
        )
        details.update(
            {"seed": seed, "trials": result.trials, "successes": result.successes,
             "empirical": result.rate}
        )
    if args.manifest:
        _write_manifest(args.manifest, "bound", argv, details.get("seed"),
                        [], [], details)
    return 0


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neuperm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sanitize", help="rewrite a weight file with a disruptor")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--disrupt", required=True,
                   help="none | noise:sigma | prune:ratio | neuperm[:fraction]")
    p.add_argument("--descriptor", help="architecture descriptor JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--verify", action="store_true",
                   help="check outputs are preserved before writing")
    p.add_argument("--net", help="net sidecar path (default: INPUT.net.json)")
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--manifest", help="write a replayable run manifest here")
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("attack", help="embed a payload file into a weight file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--attack", required=True, help="lsb[:bits] | sign | ss:gamma")
    p.add_argument("--payload", required=True, help="payload bytes to embed")
    p.add_argument("--ecc", default="none", help="none | repetition:r | hamming74")
    p.add_argument("--seed", type=int)
    p.add_argument("--plan", help="write the extraction plan JSON here")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="extraction attempts against disrupted variants")
    p.add_argument("--carrier", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--disrupt", action="append", default=[],
                   help="repeatable disruptor spec")
    p.add_argument("--descriptor")
    p.add_argument("--trials", type=int, default=1,
                   help="variants per stochastic disruptor")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True, help="CSV of attempts")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bound", help="closed-form payload survival bound")
    p.add_argument("--d", type=float, help="worst per-bit survival probability")
    p.add_argument("--site-sizes", help="comma-separated site sizes (d = 1/min)")
    p.add_argument("--L", type=int, help="coded bits under permutation")
    p.add_argument("--L-prime", type=int, dest="L_prime", help="embedded coded bits")
    p.add_argument("--L-total", type=int, dest="L_total", help="total parameters")
    p.add_argument("--L-np", type=int, dest="L_np", help="parameters a schedule moves")
    p.add_argument("--delta", type=float, help="correctable error fraction")
    p.add_argument("--ecc", help="derive delta from an ecc spec")
    p.add_argument("--simulate", type=int, metavar="TRIALS")
    p.add_argument("--seed", type=int)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args, argv)
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (BoundInapplicableError, IneffectiveRegimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except VerificationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ParseError, DescriptorError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
