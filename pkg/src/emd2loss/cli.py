"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 invalid input/config, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import config as cfgmod
from .errors import InsufficientDataError, InvalidInputError, NumericalError, UndefinedMetricError
from .fileio import append_report, read_matrix_csv, write_matrix_csv
from .ground_distance import (CentroidAccumulator, GroundMatrix, percentile_transform,
                              raw_distance_matrix, sdd, symmetrize)
from .losses import emd2_ordered, emd2_ordered_expanded, emd_single_label
from .metrics import evaluate, expected_score
from .net import build_model, load_checkpoint, read_history, save_checkpoint, train, write_history
from .oracle import emd_exact

log = logging.getLogger("emd2loss")

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# train


def run_training(cfg, out_dir):
    """Train per ``cfg`` and write checkpoint, history and matrices into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfgmod.train_config(cfg)
    train_set, test_set, centers = cfgmod.build_datasets(cfg)
    external = None
    if cfg["train"]["external_matrix"]:
        external = GroundMatrix(read_matrix_csv(cfg["train"]["external_matrix"])[0], "external")
    model = build_model(tcfg, train_set.feature_dim, train_set.num_classes,
                        cfg["net"]["hidden_sizes"], cfg["seed"], cfg["net"]["weight_init_scale"])
    result = train(model, train_set, tcfg, test_set, external)

    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    write_history(result.history, out / "history.csv")
    save_checkpoint(result.model, out / "checkpoint.npz")
    if result.ground is not None:
        write_matrix_csv(result.ground.entries, out / "ground_matrix.csv")
    if result.lambda_fit is not None:
        (out / "lambda_fit.json").write_text(json.dumps(result.lambda_fit, indent=2) + "\n")
    eval_set = test_set if test_set is not None else train_set
    report = _evaluate_model(result.model, eval_set, centers)
    report.extra["split"] = eval_set.split_tag
    (out / "eval.jsonl").write_text(report.to_json() + "\n")
    return result, report


def cmd_train(args):
    cfg = cfgmod.load_config(args.config, seed=args.seed, out_dir=args.out)
    result, report = run_training(cfg, cfg["out_dir"])
    last = result.history[-1] if result.history else None
    print(f"trained {cfg['train']['loss_kind']} for {len(result.history)} epochs -> {cfg['out_dir']}")
    if last is not None:
        print(f"final: train_AEM={last.train_AEM:.4f} test_AEM={last.test_AEM:.4f} test_AEO={last.test_AEO:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / gd-matrix


def _evaluate_model(model, ds, centers=None):
    if model.num_classes is not None and model.num_classes != ds.num_classes:
        raise InvalidInputError(f"checkpoint has {model.num_classes} classes, dataset has {ds.num_classes}")
    out = model.predict(ds.features)
    if model.config.head == "softmax":
        pred = np.argmax(out, axis=1)
        c = np.arange(ds.num_classes, dtype=np.float64) if centers is None else centers
        scores = expected_score(out, c)
    else:
        pred = model.predict_labels(ds.features)
        scores = out
    return evaluate(pred, ds.labels, ds.num_classes, scores)


def _load_model(path):
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"checkpoint not found: {p}")
    return load_checkpoint(p)


def _dataset_from_args(args, model):
    from .data import load_csv, read_bin_sidecar

    centers = read_bin_sidecar(args.bins)[1] if args.bins else None
    if args.data:
        if not Path(args.data).is_file():
            raise InvalidInputError(f"dataset not found: {args.data}")
        C = args.num_classes or model.num_classes
        if C is None:
            raise InvalidInputError("--num-classes is required for regression checkpoints")
        return load_csv(args.data, C, args.header), centers
    if args.config:
        cfg = cfgmod.load_config(args.config, seed=args.seed)
        train_set, test_set, cfg_centers = cfgmod.build_datasets(cfg)
        ds = train_set if args.split == "train" or test_set is None else test_set
        return ds, centers if centers is not None else cfg_centers
    raise InvalidInputError("give a dataset with --data CSV or --config")


def cmd_eval(args):
    model = _load_model(args.checkpoint)
    ds, centers = _dataset_from_args(args, model)
    if model.config.head == "softmax" and model.num_outputs != ds.num_classes:
        raise InvalidInputError(f"checkpoint has {model.num_outputs} classes, dataset has {ds.num_classes}")
    if model.config.head == "linear":
        model.num_classes = ds.num_classes
    report = _evaluate_model(model, ds, centers)
    report.extra["split"] = ds.split_tag
    report.extra["checkpoint"] = str(args.checkpoint)
    print(f"AEM={report.aem:.4f} AEO={report.aeo:.4f}"
          + (f" rho={report.spearman_rho:.4f}" if report.spearman_rho is not None else ""))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        append_report(report, Path(args.out) / "eval.jsonl")
    return EXIT_OK


def ground_matrices(model, ds, include_diagonal=True):
    """Raw centroid distances, percentile matrix, learned D and SDD for a dataset."""
    if model.config.head != "softmax":
        raise InvalidInputError("gd-matrix needs a softmax checkpoint")
    if model.num_outputs != ds.num_classes:
        raise InvalidInputError(f"checkpoint has {model.num_outputs} classes, dataset has {ds.num_classes}")
    acc = CentroidAccumulator(ds.num_classes, model.feature_dim)
    for i in range(0, len(ds), 1024):
        _, feats, _ = model.forward(ds.features[i:i + 1024])
        acc.add_batch(feats, ds.labels[i:i + 1024])
    raw = raw_distance_matrix(acc)
    B = percentile_transform(raw)
    return raw, B, symmetrize(B), sdd(raw, include_diagonal)


def cmd_gd_matrix(args):
    model = _load_model(args.checkpoint)
    ds, _ = _dataset_from_args(args, model)
    raw, B, D, s = ground_matrices(model, ds, not args.sdd_off_diagonal)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(raw, out / "raw_distances.csv")
    write_matrix_csv(B, out / "percentile.csv")
    write_matrix_csv(D.entries, out / "ground_matrix.csv")
    (out / "sdd.csv").write_text(f"SDD,include_diagonal\n{s!r},{not args.sdd_off_diagonal}\n")
    print(f"SDD={s:.4g}")
    with np.printoptions(precision=2, suppress=True):
        print(D.entries)
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle-check


def _random_ground(rng, C):
    A = rng.random((C, C))
    D = np.triu(A, 1)
    return D + D.T


def run_oracle_checks(c_min=2, c_max=8, trials=500, seed=0, inject=0.0, tol=1e-9):
    """Randomised cross-checks of the closed forms against the exact solver.

    Returns a list of ``(identity, n_checked, max_abs_err, failure_or_None)``.
    """
    rng = np.random.default_rng(seed)
    stats = {name: [0, 0.0, None] for name in ("ordered_cdf", "single_label", "emd2_expansion")}

    def record(name, err, instance):
        st = stats[name]
        st[0] += 1
        st[1] = max(st[1], err)
        if err > tol and st[2] is None:
            st[2] = instance

    for C in range(c_min, c_max + 1):
        idx = np.arange(C)
        ordinal = np.abs(idx[:, None] - idx[None, :]).astype(float)
        for _ in range(trials):
            p = rng.dirichlet(np.ones(C))
            t = rng.dirichlet(np.ones(C))
            closed = np.sum(np.abs(np.cumsum(p) - np.cumsum(t))) + inject
            exact = emd_exact(p, t, ordinal)
            record("ordered_cdf", abs(closed - exact),
                   {"p": p.tolist(), "t": t.tolist(), "D": ordinal.tolist(), "closed": closed, "oracle": exact})

            k = int(rng.integers(C))
            D = _random_ground(rng, C)
            onehot = np.zeros(C)
            onehot[k] = 1.0
            fast = emd_single_label(p, k, D).value + inject
            exact = emd_exact(p, onehot, D)
            record("single_label", abs(fast - exact),
                   {"p": p.tolist(), "k": k, "D": D.tolist(), "closed": fast, "oracle": exact})

            a = emd2_ordered(p, k)
            b = emd2_ordered_expanded(p, k)
            err = max(abs(a.value + inject - b.value), float(np.max(np.abs(a.grad - b.grad))))
            record("emd2_expansion", err, {"p": p.tolist(), "k": k, "cdf_form": a.value, "expanded": b.value})
    return [(name, st[0], st[1], st[2]) for name, st in stats.items()]


def cmd_oracle_check(args):
    if args.trials == 0:
        warnings.warn("oracle-check with --trials 0 checks nothing")
        print("no trials requested; vacuous pass")
        return EXIT_OK
    results = run_oracle_checks(args.c_min, args.c_max, args.trials, args.seed, args.inject_error)
    ok = True
    print(f"{'identity':<16} {'checked':>8} {'max_err':>11}  status")
    for name, n, err, failure in results:
        status = "PASS" if failure is None else "FAIL"
        ok &= failure is None
        print(f"{name:<16} {n:>8} {err:>11.3e}  {status}")
        if failure is not None:
            print(json.dumps({"identity": name, **failure}), file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args):
    cdir = Path(args.config_dir)
    paths = sorted(list(cdir.glob("*.yaml")) + list(cdir.glob("*.yml")))
    if not paths:
        raise InvalidInputError(f"no *.yaml configs in {cdir}")
    cfgs = [cfgmod.load_config(p, seed=args.seed) for p in paths]
    ref = (cfgs[0]["data"], cfgs[0]["seed"])
    for p, c in zip(paths, cfgs):
        if (c["data"], c["seed"]) != ref:
            raise InvalidInputError(f"{p.name}: dataset differs from {paths[0].name}")
    out = Path(args.out or cdir / "compare")
    out.mkdir(parents=True, exist_ok=True)
    combined, summary = [], []
    for p, c in zip(paths, cfgs):
        run_dir = out / p.stem
        c["out_dir"] = str(run_dir)
        if args.reuse and (run_dir / "history.csv").is_file() and (run_dir / "eval.jsonl").is_file():
            from .fileio import read_reports
            history = read_history(run_dir / "history.csv")
            report = read_reports(run_dir / "eval.jsonl")[-1]
        else:
            result, report = run_training(c, run_dir)
            history = result.history
        method = p.stem
        for rec in history:
            combined.append((method, rec.epoch, rec.test_AEM, rec.test_AEO))
        summary.append((method, c["train"]["loss_kind"], report.aem, report.aeo, report.spearman_rho))
    with open(out / "combined.csv", "w") as fh:
        fh.write("method,epoch,test_AEM,test_AEO\n")
        for m, e, a, o in combined:
            fh.write(f"{m},{e},{a!r},{o!r}\n")
    with open(out / "summary.csv", "w") as fh:
        fh.write("method,loss_kind,AEM,AEO,rho\n")
        for m, k, a, o, r in summary:
            fh.write(f"{m},{k},{a!r},{o!r},{'' if r is None else repr(r)}\n")
    print(f"{'method':<16} {'AEM':>7} {'AEO':>7} {'rho':>7}")
    for m, k, a, o, r in summary:
        print(f"{m:<16} {a:7.4f} {o:7.4f} {'' if r is None else format(r, '7.4f')}")
    return EXIT_OK


def cmd_config_template(args):
    sys.stdout.write(cfgmod.template())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="emd2loss", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="run config (YAML)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the run seed")

    p = sub.add_parser("train", help="train one configuration")
    common(p, config_required=True)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a checkpoint"),
                                 ("gd-matrix", cmd_gd_matrix, "export the learned ground-distance matrix")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", help="dataset CSV (features..., label)")
        p.add_argument("--num-classes", type=int)
        p.add_argument("--header", action="store_true", help="CSV has a header row")
        p.add_argument("--split", choices=("train", "test"), default="test",
                       help="which split of the config's data to use")
        p.add_argument("--bins", help="bin sidecar JSON (for expected-score decoding)")
        if name == "gd-matrix":
            p.add_argument("--sdd-off-diagonal", action="store_true",
                           help="compute SDD over off-diagonal entries only")
        p.set_defaults(func=func)

    p = sub.add_parser("oracle-check", help="cross-check closed forms against the exact solver")
    common(p)
    p.add_argument("--c-min", type=int, default=2)
    p.add_argument("--c-max", type=int, default=8)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--inject-error", type=float, default=0.0, help="perturb the closed forms (self-test)")
    p.set_defaults(func=cmd_oracle_check, seed=0)

    p = sub.add_parser("compare", help="train a directory of configs and tabulate them")
    common(p)
    p.add_argument("--config-dir", required=True)
    p.add_argument("--reuse", action="store_true", help="reuse existing run directories")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("config-template", help="print a config with every default filled in")
    p.set_defaults(func=cmd_config_template)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InsufficientDataError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, UndefinedMetricError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
