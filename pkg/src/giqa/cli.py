"""Command-line front end.

Subcommands cover the full pipeline: demo data, PCA, GMM/MBC fitting,
scoring, pair evaluation, quality/diversity scores, picking, and loss
weights.  Every command writes a run manifest (resolved parameters,
input checksums, seed, version, wall time) next to its main output.

Exit codes: 0 success, 2 argument error, 3 data error, 4 numerical
failure.

GIQA_THREADS caps the BLAS thread pools used internally when the
optional threadpoolctl package is installed; otherwise it is ignored.

The picker is this tool's counterpart to latent-space truncation:
instead of shrinking the sampling distribution it drops the
lowest-scored images and keeps a remaining-rate fraction.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, demo
from .errors import DataError, ExactMatchError, NumericalError
from .features import (
    apply_pca,
    fit_pca,
    load_pca,
    read_features,
    save_pca,
    write_features,
)
from .gmm import DEFAULT_COMPONENTS, EmConfig, fit_gmm, load_gmm, save_gmm, score_gmm
from .knn import DEFAULT_K, build_index, score_knn
from .mbc import (
    DEFAULT_NUM_HEADS,
    DEFAULT_S_G,
    MbcTrainConfig,
    load_mbc,
    read_training_manifest,
    save_mbc,
    score_mbc_batch,
    train_mbc,
)
from .metrics import (
    ScoreTable,
    diversity_score,
    normalize_scores,
    normalize_union,
    pair_accuracy,
    quality_score,
    read_pairs,
    read_score_table,
    write_pairs,
    write_score_table,
)
from .picker import OhemConfig, ohem_weights, pick_top

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(command, args, inputs, outputs, started, manifest_path=None):
    params = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func",)
    }
    doc = {
        "command": command,
        "parameters": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "input_checksums": {str(p): _sha256(p) for p in inputs},
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "wall_time_s": round(time.monotonic() - started, 6),
    }
    if manifest_path is None:
        base = Path(outputs[0]) if outputs else Path(f"{command.replace(' ', '-')}")
        manifest_path = base.with_name(base.name + ".manifest.json")
    Path(manifest_path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def cmd_demo(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    real = demo.make_real(args.n, seed=args.seed)
    generated = demo.make_generated(args.n, seed=args.seed + 1)
    collapsed = demo.make_collapsed(args.n, seed=args.seed + 2)
    write_features(real, out / "real.giqf")
    write_features(generated, out / "generated.giqf")
    write_features(collapsed, out / "collapsed.giqf")
    write_pairs(demo.make_graded_pairs(generated, seed=args.seed + 3), out / "pairs.csv")
    print(f"demo data written to {out}")
    return [], [out / "real.giqf"]


def cmd_fit_gmm(args):
    train = read_features(args.input)
    config = EmConfig(
        max_em_iters=args.max_iters,
        tol=args.tol,
        reg_covar=args.reg_covar,
        n_init=args.n_init,
        seed=args.seed,
    )
    model = fit_gmm(train, args.components, args.covariance, config)
    save_gmm(model, args.model)
    final_ll = model.log_likelihood_trace[-1] if model.log_likelihood_trace else float("nan")
    print(f"mean_log_likelihood={final_ll:.6f}")
    return [args.input], [args.model]


def cmd_fit_mbc(args):
    dataset = read_training_manifest(args.train_manifest, s_g=args.sg)
    config = MbcTrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        l2_penalty=args.l2,
        seed=args.seed,
    )
    model = train_mbc(dataset, args.heads, config, s_g=args.sg)
    save_mbc(model, args.model)
    best_val = min(model.val_loss_trace) if model.val_loss_trace else float("nan")
    print(f"best_validation_loss={best_val:.6f}")
    return [args.train_manifest], [args.model]


def cmd_pca(args):
    matrix = read_features(args.input)
    if args.model_in:
        model = load_pca(args.model_in)
    else:
        model = fit_pca(matrix, args.pca_variance)
        if args.model:
            save_pca(model, args.model)
    write_features(apply_pca(model, matrix), args.output)
    print(f"projected dim={model.basis.shape[1]}")
    inputs = [args.input] + ([args.model_in] if args.model_in else [])
    return inputs, [args.output]


def cmd_score(args):
    batch = read_features(args.input)
    inputs = [args.input]
    if args.method == "gmm":
        if not args.model:
            raise ValueError("--model is required for --method gmm")
        table = score_gmm(load_gmm(args.model), batch)
        inputs.append(args.model)
    elif args.method == "knn":
        if not args.reference:
            raise ValueError("--reference is required for --method knn")
        index = build_index(read_features(args.reference))
        table = score_knn(index, batch, k=args.k)
        inputs.append(args.reference)
    else:
        if not args.model:
            raise ValueError("--model is required for --method mbc")
        model = load_mbc(args.model)
        table = ScoreTable(
            ids=batch.ids, raw=score_mbc_batch(model, batch), scorer_kind="mbc"
        )
        inputs.append(args.model)
    if args.normalize:
        table = normalize_scores(table)
    write_score_table(table, args.output)
    return inputs, [args.output]


def cmd_eval_pairs(args):
    table = read_score_table(args.scores)
    pairs = read_pairs(args.pairs)
    accuracy = pair_accuracy(table, pairs)
    if args.output:
        import csv

        with open(args.output, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id_a", "id_b", "winner", "score_a", "score_b", "hit"])
            for a, b, winner in pairs.pairs:
                sa, sb = table.raw_of(a), table.raw_of(b)
                win, lose = (sa, sb) if winner == "a" else (sb, sa)
                hit = 1.0 if win > lose else (0.5 if win == lose else 0.0)
                writer.writerow([a, b, winner, repr(sa), repr(sb), hit])
    print(f"accuracy={accuracy:.4f}")
    return [args.scores, args.pairs], [args.output] if args.output else []


def cmd_qs(args):
    tables = [read_score_table(p) for p in args.scores]
    if any(t.normalized is None for t in tables):
        tables = normalize_union(tables)
    for path, table in zip(args.scores, tables):
        label = f" {path}" if len(tables) > 1 else ""
        print(f"qs={quality_score(table):.4f}{label}")
    return list(args.scores), []


def cmd_ds(args):
    generated = read_features(args.generated)
    real = read_features(args.real)
    if args.method == "gmm":
        ds = diversity_score(
            generated,
            real,
            "gmm",
            n_components=args.components,
            covariance_type=args.covariance,
            config=EmConfig(seed=args.seed),
        )
    else:
        ds = diversity_score(generated, real, "knn", k=args.k)
    print(f"ds={ds:.4f}")
    return [args.generated, args.real], []


def cmd_pick(args):
    table = read_score_table(args.scores)
    picked = pick_top(table, args.rate)
    Path(args.output).write_text("\n".join(picked) + "\n")
    print(f"picked {len(picked)} of {len(table)}")
    return [args.scores], [args.output]


def cmd_weights(args):
    table = read_score_table(args.scores)
    if table.normalized is None:
        table = normalize_scores(table)
    weights = ohem_weights(table, OhemConfig(t_q=args.tq, w_l=args.wl))
    import csv

    with open(args.output, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "weight"])
        for image_id, weight in zip(table.ids, weights):
            writer.writerow([image_id, repr(float(weight))])
    return [args.scores], [args.output]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="giqa", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--version", action="version", version=f"giqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="write a bundled synthetic demo dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("fit-gmm", help="fit a Gaussian mixture to real features")
    p.add_argument("--input", required=True, help="training features (GIQF)")
    p.add_argument("--model", required=True, help="output model JSON")
    p.add_argument("--components", type=_positive_int, default=DEFAULT_COMPONENTS)
    p.add_argument(
        "--covariance", choices=("full", "tied", "diag", "spherical"), default="full"
    )
    p.add_argument("--max-iters", type=_positive_int, default=200)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--reg-covar", type=float, default=1e-6)
    p.add_argument("--n-init", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_gmm)

    p = sub.add_parser("fit-mbc", help="train multi-head binary classifiers")
    p.add_argument(
        "--train-manifest",
        required=True,
        help="JSON-lines manifest: {feature_file, row, iter, max_iter, is_real}",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--heads", type=_positive_int, default=DEFAULT_NUM_HEADS)
    p.add_argument("--sg", type=float, default=DEFAULT_S_G)
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--batch-size", type=_positive_int, default=512)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_mbc)

    p = sub.add_parser("pca", help="fit and/or apply a PCA reduction")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="projected features (GIQF)")
    p.add_argument("--pca-variance", type=float, default=1.0)
    p.add_argument("--model", help="where to save the fitted PCA model")
    p.add_argument("--model-in", help="apply this existing PCA model instead of fitting")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("score", help="score a feature batch")
    p.add_argument("--method", choices=("gmm", "knn", "mbc"), required=True)
    p.add_argument("--input", required=True, help="batch features (GIQF)")
    p.add_argument("--output", required=True, help="score table CSV")
    p.add_argument("--model", help="model JSON (gmm/mbc)")
    p.add_argument("--reference", help="reference features GIQF (knn)")
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-pairs", help="pair-preference accuracy of a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--output", help="per-pair CSV")
    p.set_defaults(func=cmd_eval_pairs)

    p = sub.add_parser("qs", help="mean normalized quality of score tables")
    p.add_argument(
        "--scores",
        nargs="+",
        required=True,
        help="one or more score tables; tables lacking a normalized column "
        "are min-max normalized jointly so values stay comparable",
    )
    p.set_defaults(func=cmd_qs)

    p = sub.add_parser("ds", help="diversity score via real/generated role exchange")
    p.add_argument("--generated", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--method", choices=("gmm", "knn"), default="gmm")
    p.add_argument("--components", type=_positive_int, default=DEFAULT_COMPONENTS)
    p.add_argument(
        "--covariance", choices=("full", "tied", "diag", "spherical"), default="full"
    )
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ds)

    p = sub.add_parser("pick", help="keep the top remaining-rate fraction of ids")
    p.add_argument("--scores", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--output", required=True, help="newline-separated picked ids")
    p.set_defaults(func=cmd_pick)

    p = sub.add_parser("weights", help="hard-example loss weights from scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--tq", type=float, default=0.2)
    p.add_argument("--wl", type=float, default=2.0)
    p.add_argument("--output", required=True, help="CSV id,weight")
    p.set_defaults(func=cmd_weights)

    return parser


def _apply_thread_cap():
    cap = os.environ.get("GIQA_THREADS")
    if not cap:
        return None
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=int(cap))
    except (ImportError, ValueError):
        return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    _apply_thread_cap()
    try:
        inputs, outputs = args.func(args)
        _write_manifest(args.command, args, inputs, outputs, started)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"giqa {args.command}: {exc}", file=sys.stderr)
        print(f"run 'giqa {args.command} --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"giqa {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ExactMatchError, FloatingPointError) as exc:
        print(f"giqa {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
