"""Operator command line: synth, explain, train-surrogate, shapley, eval,
compare, answer-merge, selftest.

Exit codes: 0 success, 1 usage, 2 schema violation, 3 missing oracle
entries (a request file is written), 4 numerical failure.

Every command is deterministic given --seed; wall-clock timings are written
to separate ``*.timing.json`` sidecars so the machine-readable records stay
byte-identical across re-runs.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, oracle, shapley, surrogate
from .fileformat import MissingEntryError, NumericalError, SchemaError, f2s, write_record
from .oracle import SyntheticOracleSpec, load_case, oracle_game, synth_case
from .surrogate import VARIANTS, TrainConfig, surrogate_game

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCHEMA = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; the contract says 1
        raise UsageError(message)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels (schedule-order independent)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _write_timing(out: Path, name: str, timings: dict[str, float]) -> None:
    # Not covered by the byte-identical determinism contract.
    write_record(out / f"{name}.timing.json", "timing", {k: f2s(v) for k, v in timings.items()})


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        n_train_samples=args.train_samples,
        n_holdout_samples=args.holdout_samples,
        hidden_width=args.hidden_width,
        seed=seed,
    )


def _spec_from_args(args) -> SyntheticOracleSpec:
    return SyntheticOracleSpec(
        n_concepts=args.n_concepts,
        n_classes=args.n_classes,
        feature_dim=args.feature_dim,
        hidden_width=args.gen_hidden_width,
        nonlinearity=args.nonlinearity,
    )


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = _spec_from_args(args)
    cases = []
    for idx in range(args.count):
        case_seed = derive_seed(args.seed, "synth", idx)
        case = synth_case(spec, case_seed, case_id=f"case{idx:04d}-seed{args.seed}")
        path = out / f"{case.case_id}.case.json"
        oracle.save_case(case, path)
        cases.append({"case_id": case.case_id, "seed": case_seed, "path": path.name})
    write_record(out / "manifest.json", "manifest", {"base_seed": args.seed, "cases": cases})
    print(f"wrote {len(cases)} case file(s) and manifest to {out}")
    return EXIT_OK


def _estimate_for(args, case, game, n) -> shapley.ShapleyEstimate:
    method = args.method
    if method == "auto":
        method = "exact" if n <= 20 else "mc"
    if method == "exact":
        return shapley.exact_shapley(game, n)
    return shapley.mc_shapley(game, n, K=args.samples, seed=args.seed)


def cmd_explain(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = load_case(args.case)
    stem = f"{case.case_id}.{args.variant}"
    cfg = _train_config(args, args.seed)
    try:
        weights, report = surrogate.train(case, args.variant, cfg)
    except MissingEntryError as e:
        raise MissingEntryError(e.coalitions, case.case_id) from e
    surrogate.save_surrogate(weights, out / f"{stem}.surrogate.json", cfg)

    game = (
        surrogate_game(weights, case.head, case.predicted_class)
        if args.backend == "surrogate"
        else oracle_game(case)
    )
    t0 = time.perf_counter()
    est = _estimate_for(args, case, game, case.n_concepts)
    shapley_time = time.perf_counter() - t0
    shapley.save_estimate(est, case.case_id, out / f"{stem}.shapley.json")

    if args.pie_curves:
        print("warning: faithfulness curves evaluated on the surrogate, not the target")
        curve_game = surrogate_game(weights, case.head, case.predicted_class)
    else:
        curve_game = oracle_game(case)
    try:
        expl = evaluate.build_report(curve_game, est, min_size=args.min_size)
    except MissingEntryError as e:
        raise MissingEntryError(e.coalitions, case.case_id) from e
    evaluate.save_report(expl, case.case_id, out / f"{stem}.explanation.json")
    (out / f"{stem}.insertion.tsv").write_text(evaluate.curve_table(expl.insertion_curve))
    (out / f"{stem}.deletion.tsv").write_text(evaluate.curve_table(expl.deletion_curve))
    if args.plot:
        (out / f"{stem}.curves.svg").write_text(
            evaluate.curve_svg(expl, title=f"{case.case_id} ({args.variant})")
        )
    _write_timing(out, stem, {"pie_time": report.pie_time, "shapley_time": shapley_time})

    if args.format == "text":
        print(f"case {case.case_id}: variant={args.variant} "
              f"holdout_KL={report.final_holdout_kl:.6f} pie_time={report.pie_time:.2f}s")
        print(f"ranking: {expl.ranking}")
        print(f"explanation subset: {expl.selected} (phi={expl.phi_selected:.6f})")
        print(f"insertion AUC {expl.insertion_auc * 100:.2f}  "
              f"deletion AUC {expl.deletion_auc * 100:.2f}")
    else:
        sys.stdout.write((out / f"{stem}.explanation.json").read_text())
    return EXIT_OK


def cmd_train_surrogate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = load_case(args.case)
    cfg = _train_config(args, args.seed)
    try:
        weights, report = surrogate.train(case, args.variant, cfg)
    except MissingEntryError as e:
        raise MissingEntryError(e.coalitions, case.case_id) from e
    stem = f"{case.case_id}.{args.variant}"
    path = surrogate.save_surrogate(weights, out / f"{stem}.surrogate.json", cfg)
    _write_timing(out, stem, {"pie_time": report.pie_time})
    print(f"trained {args.variant} surrogate -> {path}")
    print(f"final train CE {report.final_train_ce:.6f}  "
          f"holdout KL {report.final_holdout_kl:.6f}  pie_time {report.pie_time:.2f}s")
    return EXIT_OK


def cmd_shapley(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = load_case(args.case)
    if args.surrogate:
        weights = surrogate.load_surrogate(args.surrogate)
        game = surrogate_game(weights, case.head, case.predicted_class)
        label = "surrogate"
    else:
        game = oracle_game(case)
        label = "oracle"
    try:
        est = _estimate_for(args, case, game, case.n_concepts)
    except MissingEntryError as e:
        raise MissingEntryError(e.coalitions, case.case_id) from e
    path = shapley.save_estimate(est, case.case_id, out / f"{case.case_id}.shapley.json")
    if args.format == "text":
        print(f"{est.method} Shapley values ({label}-backed) for {case.case_id}:")
        for i, (v, se) in enumerate(zip(est.values, est.std_errors)):
            print(f"  concept {i}: {v:+.6f} (se {se:.6f})")
    else:
        sys.stdout.write(Path(path).read_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = load_case(args.case)
    rec_id, est = shapley.load_estimate(args.shapley)
    if rec_id != case.case_id:
        raise SchemaError(f"shapley record is for {rec_id!r}, case is {case.case_id!r}")
    if args.pie_curves:
        if not args.surrogate:
            raise UsageError("--pie-curves requires --surrogate")
        print("warning: faithfulness curves evaluated on the surrogate, not the target")
        weights = surrogate.load_surrogate(args.surrogate)
        game = surrogate_game(weights, case.head, case.predicted_class)
    else:
        game = oracle_game(case)
    try:
        expl = evaluate.build_report(game, est, min_size=args.min_size)
    except MissingEntryError as e:
        raise MissingEntryError(e.coalitions, case.case_id) from e
    path = evaluate.save_report(expl, case.case_id, out / f"{case.case_id}.explanation.json")
    (out / f"{case.case_id}.insertion.tsv").write_text(evaluate.curve_table(expl.insertion_curve))
    (out / f"{case.case_id}.deletion.tsv").write_text(evaluate.curve_table(expl.deletion_curve))
    if args.plot:
        (out / f"{case.case_id}.curves.svg").write_text(
            evaluate.curve_svg(expl, title=case.case_id)
        )
    if args.format == "text":
        print(f"explanation subset {expl.selected} (phi={expl.phi_selected:.6f})")
        print(f"insertion AUC {expl.insertion_auc * 100:.2f}  "
              f"deletion AUC {expl.deletion_auc * 100:.2f}")
    else:
        sys.stdout.write(Path(path).read_text())
    return EXIT_OK


def _compare_run(case_path: str, variant: str, rep: int, seed: int,
                 cfg: TrainConfig, method: str, samples: int) -> tuple[dict, float]:
    case = load_case(case_path)
    weights, report = surrogate.train(case, variant, replace(cfg, seed=seed))
    game = surrogate_game(weights, case.head, case.predicted_class)
    n = case.n_concepts
    if method == "exact" or (method == "auto" and n <= 20):
        est = shapley.exact_shapley(game, n)
    else:
        est = shapley.mc_shapley(game, n, K=samples, seed=seed)
    expl = evaluate.build_report(oracle_game(case), est)
    record = {
        "case_id": case.case_id,
        "variant": variant,
        "rep": rep,
        "seed": seed,
        "final_train_ce": f2s(report.final_train_ce),
        "final_holdout_kl": f2s(report.final_holdout_kl),
        "insertion_auc": f2s(expl.insertion_auc),
        "deletion_auc": f2s(expl.deletion_auc),
    }
    return record, report.pie_time


def cmd_compare(args) -> int:
    out = Path(args.out)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise UsageError("need at least one variant")
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {VARIANTS}")
    if args.repetitions < 1:
        raise UsageError("repetitions must be >= 1")

    case_paths = sorted(str(p) for p in Path(args.cases).glob("*.case.json"))
    if not case_paths:
        raise UsageError(f"no *.case.json files under {args.cases}")

    cfg = _train_config(args, seed=0)
    jobs = []
    for path in case_paths:
        cid = Path(path).name.removesuffix(".case.json")
        for variant in variants:
            for rep in range(args.repetitions):
                seed = derive_seed(args.seed, cid, variant, rep)
                jobs.append((path, variant, rep, seed))

    results = []
    failures = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_compare_run, p, v, r, s, cfg, args.method, args.samples)
                for p, v, r, s in jobs
            ]
            for (p, v, r, s), fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as e:  # partial results still flushed below
                    failures.append((p, v, r, e))
    else:
        for p, v, r, s in jobs:
            try:
                results.append(_compare_run(p, v, r, s, cfg, args.method, args.samples))
            except Exception as e:
                failures.append((p, v, r, e))

    per_variant: dict[str, dict[str, list[float]]] = {
        v: {"ins": [], "del": [], "kl": [], "pie": []} for v in variants
    }
    timings = {}
    for record, pie_time in results:
        name = f"{record['case_id']}__{record['variant']}__rep{record['rep']}"
        write_record(runs_dir / f"{name}.json", "run", record)
        timings[name] = pie_time
        agg = per_variant[record["variant"]]
        agg["ins"].append(float(record["insertion_auc"]))
        agg["del"].append(float(record["deletion_auc"]))
        agg["kl"].append(float(record["final_holdout_kl"]))
        agg["pie"].append(pie_time)

    summary_rows = []
    for v in variants:
        agg = per_variant[v]
        if not agg["ins"]:
            continue
        summary_rows.append({
            "variant": v,
            "runs": len(agg["ins"]),
            "mean_insertion_auc": f2s(float(np.mean(agg["ins"]))),
            "mean_deletion_auc": f2s(float(np.mean(agg["del"]))),
            "mean_holdout_kl": f2s(float(np.mean(agg["kl"]))),
        })
    write_record(out / "summary.json", "summary", {
        "base_seed": args.seed,
        "repetitions": args.repetitions,
        "variants": summary_rows,
    })
    _write_timing(out, "compare", {f"mean_pie_time.{v}": float(np.mean(per_variant[v]["pie"]))
                                   for v in variants if per_variant[v]["pie"]})

    best_ins = max(summary_rows, key=lambda r: float(r["mean_insertion_auc"]))["variant"] \
        if summary_rows else None
    lines = ["variant        ins AUC   del AUC   PIE time (s)  holdout KL"]
    for row in summary_rows:
        v = row["variant"]
        label = f"**{v}**" if v == best_ins else v
        lines.append(
            f"{label:<14} {float(row['mean_insertion_auc']) * 100:8.2f} "
            f"{float(row['mean_deletion_auc']) * 100:9.2f} "
            f"{np.mean(per_variant[v]['pie']):13.2f} "
            f"{float(row['mean_holdout_kl']):11.6f}"
        )
    table = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(table)
    print(table, end="")

    if failures:
        for path, variant, rep, e in failures:
            print(f"FAILED {Path(path).name} variant={variant} rep={rep}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_answer_merge(args) -> int:
    case = load_case(args.case)
    merged = oracle.merge_response(case, args.response)
    target = Path(args.out) if args.out else Path(args.case)
    oracle.save_case(merged, target)
    print(f"merged {len(merged.entries) - len(case.entries)} new entr(ies) into {target}")
    return EXIT_OK


def _selftest_checks():
    import tempfile

    from .coalitions import coalition_from_text, enumerate_coalitions
    from .oracle import GameView

    def coalition_roundtrip():
        for n in range(0, 7):
            for c in enumerate_coalitions(n):
                assert coalition_from_text(c.to_text(), n) == c, "text round-trip broke"

    def shapley_axioms():
        rng = np.random.default_rng(2024)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            u = rng.uniform(0, 1, size=1 << n)
            u[(1 << n) - 1] = u.max() + 0.1  # keep utilities generic
            est = shapley.exact_shapley_from_table(u, n)
            total = est.values.sum()
            expect = u[(1 << n) - 1] - u[0]
            assert abs(total - expect) < 1e-10, (
                f"efficiency axiom violated: sum {total} vs {expect}"
            )
            # plant a dummy concept: utilities ignore bit 0
            dummy = np.array([u[m & ~1] for m in range(1 << n)])
            est2 = shapley.exact_shapley_from_table(dummy, n)
            assert est2.values[0] == 0.0, "dummy concept got nonzero value"

    def gradient_check():
        from .nets import FrozenHead

        rng = np.random.default_rng(7)
        head = FrozenHead(W=rng.normal(size=(3, 4)), b=rng.normal(size=3))
        for variant in ("linear", "tanh"):
            w = surrogate.init_surrogate(variant, n=5, d=4, m=6, seed=11)
            bits = rng.integers(0, 2, size=(8, 5)).astype(float)
            targets = np.full((8, 3), 1 / 3)
            _, grads = surrogate.gradients(w, head, bits, targets)
            for name, p in w.params():
                g = grads[name]
                fd = np.zeros_like(p)
                it = np.nditer(p, flags=["multi_index"])
                while not it.finished:
                    ix = it.multi_index
                    orig = p[ix]
                    p[ix] = orig + 1e-4
                    up, _ = surrogate.gradients(w, head, bits, targets)
                    p[ix] = orig - 1e-4
                    dn, _ = surrogate.gradients(w, head, bits, targets)
                    p[ix] = orig
                    fd[ix] = (up - dn) / 2e-4
                    it.iternext()
                rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
                assert rel < 1e-5, f"gradient mismatch in {variant}.{name}: rel {rel:.2e}"

    def mc_vs_exact():
        rng = np.random.default_rng(3)
        n = 6
        u = rng.uniform(0, 1, size=1 << n)
        game = GameView(u=lambda s: float(u[s.mask]), n=n, backing="direct-oracle")
        exact = shapley.exact_shapley(game, n)
        mc = shapley.mc_shapley(game, n, K=4000, seed=0)
        err = np.abs(mc.values - exact.values).max()
        assert err <= 0.05, f"MC estimate off by {err:.4f}"

    def serialization_roundtrip():
        spec = SyntheticOracleSpec(n_concepts=4, n_classes=3, feature_dim=5)
        case = synth_case(spec, seed=99)
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "case.json"
            oracle.save_case(case, p)
            again = load_case(p)
            assert again.case_id == case.case_id
            for text, probs in case.entries.items():
                assert np.array_equal(again.entries[text], probs), "probs not bit-exact"
            w = surrogate.init_surrogate("tanh", n=4, d=5, seed=1)
            sp = Path(tmp) / "w.json"
            surrogate.save_surrogate(w, sp)
            w2 = surrogate.load_surrogate(sp)
            assert all(
                np.array_equal(a, b)
                for (_, a), (_, b) in zip(w.params(), w2.params())
            ), "weights not bit-exact"

    return [
        ("coalition-text-roundtrip", coalition_roundtrip),
        ("shapley-axioms", shapley_axioms),
        ("gradient-check", gradient_check),
        ("mc-vs-exact", mc_vs_exact),
        ("serialization-roundtrip", serialization_roundtrip),
    ]


def cmd_selftest(args) -> int:
    failed = False
    for path in args.check_file or []:
        try:
            try:
                load_case(path)
            except SchemaError:
                surrogate.load_surrogate(path)
            print(f"PASS file-check {path}")
        except (SchemaError, OSError) as e:
            print(f"FAIL file-check {path}: {e}")
            failed = True
    for name, check in _selftest_checks():
        try:
            check()
            print(f"PASS {name}")
        except AssertionError as e:
            print(f"FAIL {name}: {e}")
            failed = True
    return EXIT_NUMERICAL if failed else EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("text", "record"), default="text")


def _add_train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--train-samples", type=int, default=None)
    p.add_argument("--holdout-samples", type=int, default=None)
    p.add_argument("--hidden-width", type=int, default=None)


def _add_shapley_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=("auto", "exact", "mc"), default="auto")
    p.add_argument("--samples", "-K", type=int, default=shapley.DEFAULT_MC_SAMPLES,
                   help="Monte-Carlo samples per concept")


def build_parser() -> _Parser:
    parser = _Parser(prog="pieshap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate deterministic synthetic case files")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--n-concepts", type=int, default=8)
    p.add_argument("--n-classes", type=int, default=5)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--gen-hidden-width", type=int, default=16)
    p.add_argument("--nonlinearity", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("explain", help="train, attribute, and score one case end to end")
    p.add_argument("case")
    p.add_argument("--variant", choices=VARIANTS, default="tanh")
    p.add_argument("--backend", choices=("surrogate", "oracle"), default="surrogate",
                   help="utility backend for the Shapley computation")
    p.add_argument("--pie-curves", action="store_true",
                   help="evaluate faithfulness curves on the surrogate instead of the target")
    p.add_argument("--min-size", type=int, default=0)
    p.add_argument("--plot", action="store_true")
    _add_train_opts(p)
    _add_shapley_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("train-surrogate", help="train one surrogate and save its weights")
    p.add_argument("case")
    p.add_argument("--variant", choices=VARIANTS, default="tanh")
    _add_train_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_surrogate)

    p = sub.add_parser("shapley", help="Shapley values for a case (oracle- or surrogate-backed)")
    p.add_argument("case")
    p.add_argument("--surrogate", default=None, help="trained surrogate file to back the game")
    _add_shapley_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("eval", help="explanation subset + faithfulness from a Shapley record")
    p.add_argument("case")
    p.add_argument("--shapley", required=True, help="Shapley record file")
    p.add_argument("--surrogate", default=None)
    p.add_argument("--pie-curves", action="store_true")
    p.add_argument("--min-size", type=int, default=0)
    p.add_argument("--plot", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired variant experiment over a case directory")
    p.add_argument("--cases", required=True, help="directory of *.case.json files")
    p.add_argument("--variants", default="linear,tanh")
    p.add_argument("--repetitions", type=int, default=3)
    _add_train_opts(p)
    _add_shapley_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("answer-merge", help="merge a response file into a case")
    p.add_argument("case")
    p.add_argument("response")
    p.add_argument("--out", default=None, help="output case path (default: in place)")
    p.set_defaults(func=cmd_answer_merge)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.add_argument("--check-file", action="append", default=None,
                   help="also validate this case/surrogate file")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except MissingEntryError as e:
        out = Path(getattr(args, "out", "."))
        out.mkdir(parents=True, exist_ok=True)
        case_id = e.case_id or "unknown-case"
        path = oracle.write_request(case_id, e.coalitions, out / f"{case_id}.request.json")
        print(f"missing oracle entries: wrote request file {path} "
              f"({len(e.coalitions)} coalition(s))", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalError, surrogate.DivergenceError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
