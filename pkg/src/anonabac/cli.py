"""Command-line interface: workload generation, signing, authorization, benchmarks.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from typing import Optional

from . import bench as bench_mod
from . import model, workload as workload_mod
from .credential_crypto import keygen, sign_credential
from .errors import EngineError
from .ewpt import Engine, EngineConfig
from .model import AVPair, History, Registry, load_attribute_space


def _config_from_args(args) -> EngineConfig:
    return EngineConfig(
        threshold=args.threshold,
        mode=args.mode,
        update_interval=args.update_interval,
        weight_mode=getattr(args, "weight_mode", "normalized"),
    )


def cmd_init(args) -> int:
    space = load_attribute_space(args.space)
    registry = Registry(space)
    model.snapshot(args.out, registry, History())
    print(f"initialized state with {len(space)} attributes -> {args.out}")
    return 0


def cmd_gen(args) -> int:
    spec = workload_mod.case_spec(args.case)
    wl = workload_mod.generate(
        spec, args.seed, args.scale, target_match_rate=args.target_match_rate
    )
    workload_mod.save_workload(wl, args.out)
    print(json.dumps({"case": args.case, "seed": args.seed, "scale": args.scale, **wl.counts}))
    return 0


def cmd_keygen(args) -> int:
    seed = bytes.fromhex(args.seed_hex) if args.seed_hex else None
    pair = keygen(seed)
    doc = {
        "pk": base64.b64encode(pair.pk).decode("ascii"),
        "sk": base64.b64encode(pair.sk).decode("ascii"),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    else:
        print(json.dumps(doc))
    return 0


def cmd_sign(args) -> int:
    with open(args.key, "r", encoding="utf-8") as fh:
        key = json.load(fh)
    with open(args.credential, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    pairs = doc.get("pairs", doc)
    cred = frozenset(AVPair(a, v) for a, v in pairs.items())
    sc = sign_credential(base64.b64decode(key["sk"]), cred)
    out = {
        "credential": {p.attr: p.value for p in sc.credential},
        "signature": base64.b64encode(sc.signature).decode("ascii"),
        "signer_pk": base64.b64encode(sc.signer_pk).decode("ascii"),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1)
    else:
        print(json.dumps(out))
    return 0


def cmd_authz(args) -> int:
    wl = workload_mod.load_workload(args.workload)
    registry = wl.build_registry()
    engine = Engine(registry, wl.policies, _config_from_args(args), variant=args.variant)
    with open(args.request, "r", encoding="utf-8") as fh:
        req = model.request_from_json(json.load(fh))
    decision = engine.authorize(req)
    print(json.dumps(decision.to_json(req.seq, engine.variant)))
    return 0


def cmd_bench(args) -> int:
    results = bench_mod.run_case(
        args.case,
        args.variant,
        runs=args.runs,
        seed=args.seed,
        scale=args.scale,
        config=_config_from_args(args),
        parallel=args.parallel,
    )
    if args.csv:
        bench_mod.export_csv(results, args.csv)
    mean = results[-1]
    print(
        json.dumps(
            {
                "case": mean.case,
                "variant": mean.variant,
                "throughput_tps": mean.throughput_tps,
                "latency_avg_ms": mean.latency_avg_ms,
                "comparisons_avg": mean.comparisons_avg,
                "grant_rate": mean.grant_rate,
            }
        )
    )
    return 0


def cmd_report(args) -> int:
    spec = workload_mod.case_spec(args.case)
    wl = workload_mod.generate(spec, args.seed, args.scale)
    report = bench_mod.anonymity_report(wl)
    bench_mod.export_csv(report, args.out)
    print(f"wrote {len(report.rows)} rows -> {args.out}")
    return 0


def cmd_snapshot(args) -> int:
    wl = workload_mod.load_workload(args.workload)
    registry = wl.build_registry()
    model.snapshot(args.out, registry, History())
    print(f"snapshot of {len(registry.subjects)} subjects, {len(registry.objects)} objects -> {args.out}")
    return 0


def cmd_load(args) -> int:
    registry, history = model.load(args.state)
    print(
        json.dumps(
            {
                "attributes": len(registry.space),
                "subjects": len(registry.subjects),
                "objects": len(registry.objects),
                "history": len(history),
            }
        )
    )
    return 0


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=1.0, help="anonymity floor in bits")
    p.add_argument("--mode", choices=("strict", "subset"), default="strict")
    p.add_argument("--update-interval", type=int, default=1000, dest="update_interval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anonabac",
        description="Anonymity-quantified ABAC engine, workload generator, and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="validate an attribute space and write an empty state file")
    p.add_argument("--space", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("gen", help="generate a workload directory for a test case")
    p.add_argument("--case", required=True)
    p.add_argument("--seed", type=int, default=bench_mod.default_seed())
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--target-match-rate", type=float, default=0.5, dest="target_match_rate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("keygen", help="generate a signing keypair")
    p.add_argument("--seed-hex", dest="seed_hex", help="64 hex chars for deterministic keys")
    p.add_argument("--out")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sign", help="sign a credential file with a key file")
    p.add_argument("--key", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("authz", help="authorize a single request file against a workload")
    p.add_argument("--workload", required=True)
    p.add_argument("--request", required=True)
    p.add_argument("--variant", choices=("full", "static", "linear"), default="full")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_authz)

    p = sub.add_parser("bench", help="replay a test case and report metrics")
    p.add_argument("--case", required=True)
    p.add_argument("--variant", choices=("full", "static", "linear"), default="full")
    p.add_argument("--runs", type=int, default=bench_mod.DEFAULT_RUNS)
    p.add_argument("--seed", type=int, default=bench_mod.default_seed())
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--csv")
    p.add_argument("--weight-mode", choices=("normalized", "raw"), default="normalized", dest="weight_mode")
    p.add_argument("--parallel", action="store_true", help="chunked parallel replay")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="write the anonymity report CSV for a test case")
    p.add_argument("--case", required=True)
    p.add_argument("--seed", type=int, default=bench_mod.default_seed())
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("snapshot", help="persist a workload's registries as a state file")
    p.add_argument("--workload", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("load", help="load a state file and print a summary")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_load)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
