"""Command-line driver.

Subcommands: train, predict, evaluate, weights, ml-compare. Options can
come from a flat key=value config file (--config) with command-line flags
taking precedence. Exit codes: 0 success, 1 usage or input error, 2
numerical failure.
"""

import argparse
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import active_set, evaluation, ml_approx, model_io, representer
from .data_io import augment_translations, load, one_vs_rest
from .ep import EPConfig, predict_batch
from .errors import ConfigError, NumericalError, ParseError, PassGPError
from .hyperopt import OptimizerConfig
from .kernels import KernelFamily, KernelSpec, kernel_diag, kernel_matrix
from .stats import norm_cdf_vec

logger = logging.getLogger(__name__)

ML_COMPARE_MAX_N = 3000

_KERNEL_BY_FLAG = {
    "se": KernelFamily.SE_JITTER,
    "se-linear": KernelFamily.SE_JITTER_LINEAR,
    "poly9": KernelFamily.POLY9,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"error: {message}")


def _read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merged(args, key, default=None):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        return cfg[key]
    return default


def _as_bool(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _parse_theta(family, theta_str):
    try:
        theta = [float(v) for v in str(theta_str).split(",")]
    except ValueError:
        raise ConfigError(f"--theta must be comma-separated floats, got {theta_str!r}")
    if any(v < 0 for v in theta):
        raise ConfigError("theta components must be >= 0")
    log_theta = [math.log(v) if v > 0 else -math.inf for v in theta]
    return KernelSpec(family, tuple(log_theta))


def _load_dataset(args):
    data = _merged(args, "data")
    fmt = _merged(args, "format")
    if data is None or fmt is None:
        raise ConfigError("--data and --format are required")
    labels = _merged(args, "labels")
    if fmt == "idx" and labels is None:
        raise ConfigError("--labels is required with --format idx")
    return load(data, fmt, labels_path=labels)


def _build_kernel(args):
    kernel_flag = _merged(args, "kernel", "se")
    if kernel_flag not in _KERNEL_BY_FLAG:
        raise ConfigError(f"unknown kernel {kernel_flag!r}")
    theta = _merged(args, "theta")
    if theta is None:
        raise ConfigError("--theta is required")
    return _parse_theta(_KERNEL_BY_FLAG[kernel_flag], theta)


def _build_pass_config(args, mode, seed, p_inc=None):
    if p_inc is None:
        p_inc = float(_merged(args, "p_inc", 0.6))
    return active_set.PassConfig(
        n_init=int(_merged(args, "n_init", 0)),
        n_sub=int(_merged(args, "n_sub", 10)),
        n_pass=int(_merged(args, "n_pass", 2)),
        mode=mode,
        p_inc=p_inc,
        p_del=float(_merged(args, "p_del", 0.99)),
        m_budget=int(_merged(args, "m_budget", 0)),
        p_exc=float(_merged(args, "p_exc", 0.02)),
        hyperopt_every=int(_merged(args, "hyperopt_every", 1)),
        seed=seed,
    )


def _build_opt_config(args):
    return OptimizerConfig(
        max_evals=int(_merged(args, "max_evals", 20)),
        grad_tol=float(_merged(args, "grad_tol", 1e-4)),
    )


def _build_ep_config(args, seed=0):
    return EPConfig(
        tol=float(_merged(args, "ep_tol", 1e-6)),
        max_sweeps=int(_merged(args, "ep_max_sweeps", 50)),
        damping=float(_merged(args, "ep_damping", 0.8)),
        seed=seed,
    )


def _validate_mode_flags(args, mode):
    given = {
        key: getattr(args, key) is not None
        for key in ("p_inc", "p_del", "p_exc", "m_budget")
    }
    if mode is active_set.Mode.PASS and (given["p_exc"] or given["m_budget"]):
        raise ConfigError("--p-exc/--m-budget only apply to fpass/random modes")
    if mode is active_set.Mode.FPASS and (given["p_inc"] or given["p_del"]):
        raise ConfigError("--p-inc/--p-del only apply to pass mode")
    if mode in (active_set.Mode.RANDOM, active_set.Mode.FULL):
        for key, present in given.items():
            if present and key != "m_budget":
                raise ConfigError(f"--{key.replace('_', '-')} does not apply to {mode.value} mode")


def _maybe_augment(args, ds):
    augment = _merged(args, "augment", "none")
    if augment == "none":
        return ds
    height = ds.meta.get("height")
    width = ds.meta.get("width")
    if height is None:
        side = int(round(math.sqrt(ds.d)))
        if side * side != ds.d:
            raise ConfigError(
                "--augment needs image data (idx input or a square feature count)"
            )
        height = width = side
    return augment_translations(ds, height, width, augment)


def _binary_tasks(args, ds):
    """Yield (target_class_or_None, binary dataset) pairs for training."""
    target = _merged(args, "target_class")
    if target is None or str(target) == "none":
        if not ds.is_binary():
            raise ConfigError(
                "dataset labels are multiclass; pass --target-class K or 'all'"
            )
        labels = np.asarray(ds.labels, dtype=np.int64)
        return [(None, ds.features, labels)]
    if str(target) == "all":
        classes = sorted(int(c) for c in np.unique(ds.labels))
        return [
            (cls, ds.features, one_vs_rest(ds, cls).labels) for cls in classes
        ]
    cls = int(target)
    return [(cls, ds.features, one_vs_rest(ds, cls).labels)]


def _out_path(outdir, target, seed, suffix):
    name = "model"
    if target is not None:
        name += f"_class{target}"
    name += f"_seed{seed}{suffix}"
    return outdir / name


def cmd_train(args):
    ds = _maybe_augment(args, _load_dataset(args))
    kernel0 = _build_kernel(args)
    mode = active_set.Mode(_merged(args, "mode", "pass"))
    _validate_mode_flags(args, mode)
    base_seed = int(_merged(args, "seed", 0))
    reps = int(_merged(args, "reps", 1))
    fixed_theta = _as_bool(_merged(args, "fixed_theta", False))
    outdir = Path(_merged(args, "out", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    opt = _build_opt_config(args)
    tasks = _binary_tasks(args, ds)

    def run_one(target, X, y, seed):
        config = _build_pass_config(args, mode, seed)
        ep_config = _build_ep_config(args, seed=seed)
        t0 = time.perf_counter()
        model = active_set.fit(
            X, y, kernel0, config, opt=opt, ep_config=ep_config,
            fixed_theta=fixed_theta,
        )
        seconds = time.perf_counter() - t0
        model.target_class = target
        model_path = _out_path(outdir, target, seed, ".model")
        model_io.save_model(model, model_path)
        _out_path(outdir, target, seed, ".history.tsv").write_text(
            active_set.history_tsv(model.history)
        )
        print(
            f"trained {model_path}: |A|={model.active_size} "
            f"seconds={seconds:.2f} log_z_ep_a={model.ep_state.log_z_ep:.6f}"
        )

    from . import backend

    for rep in range(reps):
        seed = base_seed + rep
        if len(tasks) > 1 and backend.concurrent_calls_safe():
            # one-vs-rest tasks are independent; run them concurrently
            with ThreadPoolExecutor(max_workers=min(8, len(tasks))) as pool:
                futures = [
                    pool.submit(run_one, target, X, y, seed)
                    for target, X, y in tasks
                ]
                for fut in futures:
                    fut.result()
        else:
            for target, X, y in tasks:
                run_one(target, X, y, seed)
    return 0


def _query_features(args, model):
    data = _merged(args, "data")
    fmt = _merged(args, "format")
    if data is None or fmt is None:
        raise ConfigError("--data and --format are required")
    if fmt == "csv":
        with open(data) as fh:
            if not any(line.strip() for line in fh):
                return None
    ds = load(data, fmt, labels_path=_merged(args, "labels"))
    if ds.d != model.X_active.shape[1]:
        raise ConfigError(
            f"query dimension {ds.d} != model dimension {model.X_active.shape[1]}"
        )
    return ds


PREDICT_HEADER = "index\tm_star\tv_star\tprob_pos\tlabel"


def cmd_predict(args):
    model = model_io.load_model(_merged(args, "model"))
    ds = _query_features(args, model)
    lines = [PREDICT_HEADER]
    if ds is not None:
        K_star = kernel_matrix(model.kernel, ds.features, model.X_active)
        k_ss = kernel_diag(model.kernel, ds.features, training=False)
        m_star, v_star = predict_batch(model.ep_state, K_star, k_ss)
        prob_pos = norm_cdf_vec(m_star / np.sqrt(1.0 + v_star))
        labels = np.where(m_star >= 0.0, 1, -1)
        for i in range(len(m_star)):
            lines.append(
                f"{i}\t{float(m_star[i])!r}\t{float(v_star[i])!r}\t"
                f"{float(prob_pos[i])!r}\t{labels[i]}"
            )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _positive_probs(model, features):
    K_star = kernel_matrix(model.kernel, features, model.X_active)
    k_ss = kernel_diag(model.kernel, features, training=False)
    m_star, v_star = predict_batch(model.ep_state, K_star, k_ss)
    return norm_cdf_vec(m_star / np.sqrt(1.0 + v_star))


def cmd_evaluate(args):
    paths = _merged(args, "model")
    model_paths = paths if isinstance(paths, list) else [paths]
    models = [model_io.load_model(p) for p in model_paths]
    ds = _query_features(args, models[0])
    if ds is None:
        raise ConfigError("evaluation needs a nonempty test set")

    if len(models) == 1 and ds.is_binary():
        probs_pos = _positive_probs(models[0], ds.features)
        y = np.asarray(ds.labels, dtype=np.int64)
        prob_true = np.where(y == 1, probs_pos, 1.0 - probs_pos)
        pred = np.where(probs_pos >= 0.5, 1, -1)
        rep = evaluation.report(prob_true, pred, y)
    else:
        targets = [m.target_class for m in models]
        if any(t is None for t in targets):
            raise ConfigError("multiclass evaluation needs per-class models "
                              "(trained with --target-class)")
        order = np.argsort(targets)
        models = [models[i] for i in order]
        classes = np.array(sorted(targets))
        missing = set(np.unique(ds.labels)) - set(int(c) for c in classes)
        if missing:
            raise ConfigError(f"no model for class(es) {sorted(missing)}")
        probs = np.vstack([_positive_probs(m, ds.features) for m in models])
        pred = classes[evaluation.multiclass_combine(probs)]
        true = np.asarray(ds.labels, dtype=np.int64)
        # per-task probability assigned to the true one-vs-rest label
        binary_true = (true[None, :] == classes[:, None])
        prob_true = np.where(binary_true, probs, 1.0 - probs).mean(axis=0)
        rep = evaluation.report(prob_true, pred, true, classes=classes)

    lines = [
        f"n_test={rep.n_test}",
        f"error_rate={rep.error_rate!r}",
        f"brier={rep.brier!r}",
    ]
    if rep.per_class_errors is not None:
        lines.append(
            "per_class_errors="
            + ",".join(repr(float(v)) for v in rep.per_class_errors)
        )
    hist = rep.density_histogram
    lines.append("")
    lines.append("bin_low\tbin_high\tcorrect\tincorrect")
    for b in range(len(hist["correct"])):
        lines.append(
            f"{hist['edges'][b]:.4f}\t{hist['edges'][b + 1]:.4f}\t"
            f"{hist['correct'][b]}\t{hist['incorrect'][b]}"
        )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_weights(args):
    model = model_io.load_model(_merged(args, "model"))
    z, alpha = representer.weight_diagnostics(model.ep_state, model.y_active)
    lines = ["index\ty\tz\talpha"]
    for i in range(model.active_size):
        lines.append(
            f"{model.active_idx[i]}\t{model.y_active[i]}\t"
            f"{float(z[i])!r}\t{float(alpha[i])!r}"
        )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_ml_compare(args):
    ds = _load_dataset(args)
    if not ds.is_binary():
        target = _merged(args, "target_class")
        if target is None:
            raise ConfigError("multiclass data: pass --target-class K")
        ds = one_vs_rest(ds, int(target))
    n = ds.n
    if n > ML_COMPARE_MAX_N:
        print(
            f"refusing: the p_inc=1 column needs a full EP fit and n={n} exceeds "
            f"the {ML_COMPARE_MAX_N}-point guard",
            file=sys.stderr,
        )
        return 1
    kernel0 = _build_kernel(args)
    p_inc_list = sorted(
        float(v) for v in str(_merged(args, "p_inc", "0.5,0.6,0.7,0.8,0.9,0.99,1")).split(",")
    )
    base_seed = int(_merged(args, "seed", 0))
    reps = int(_merged(args, "reps", 1))
    fixed_theta = _as_bool(_merged(args, "fixed_theta", False))
    opt = _build_opt_config(args)
    y = np.asarray(ds.labels, dtype=np.int64)

    lines = [
        "p_inc\tseed\tactive_size\tlog_z_ep_a\tlog_z_app\tlog_z_acc\t"
        "seconds_app\tseconds_acc"
    ]
    for p_inc in p_inc_list:
        for rep in range(reps):
            seed = base_seed + rep
            ep_config = _build_ep_config(args, seed=seed)
            if p_inc >= 1.0:
                config = _build_pass_config(args, active_set.Mode.FULL, seed, p_inc=0.5)
            else:
                config = _build_pass_config(args, active_set.Mode.PASS, seed, p_inc=p_inc)
            model = active_set.fit(
                ds.features, y, kernel0, config, opt=opt, ep_config=ep_config,
                fixed_theta=fixed_theta,
            )
            inactive = np.setdiff1d(np.arange(n), model.active_idx)
            dec = ml_approx.decompose(
                model, ds.features[inactive], y[inactive], with_acc=True,
                config=ep_config,
            )
            lines.append(
                f"{p_inc}\t{seed}\t{dec.active_size}\t{dec.log_z_ep_a!r}\t"
                f"{dec.log_z_app!r}\t{dec.log_z_acc!r}\t"
                f"{dec.timings['seconds_app']:.4f}\t{dec.timings['seconds_acc']:.4f}"
            )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _emit(args, text):
    out = _merged(args, "out")
    if out is None or Path(out).is_dir():
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _add_common(p):
    p.add_argument("--config", help="flat key=value defaults file")
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--seed", type=int)


def _add_data(p):
    p.add_argument("--data", help="feature file")
    p.add_argument("--format", choices=("idx", "svmlight", "csv"))
    p.add_argument("--labels", help="label file (idx format)")


def _add_kernel(p):
    p.add_argument("--kernel", choices=tuple(_KERNEL_BY_FLAG))
    p.add_argument("--theta", help="comma-separated initial hyperparameters "
                                   "(natural domain; 0 disables jitter)")


def build_parser():
    parser = _Parser(prog="passgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one or more classifiers")
    _add_common(p)
    _add_data(p)
    _add_kernel(p)
    p.add_argument("--mode", choices=("pass", "fpass", "random", "full"))
    p.add_argument("--p-inc", dest="p_inc", type=float)
    p.add_argument("--p-del", dest="p_del", type=float)
    p.add_argument("--p-exc", dest="p_exc", type=float)
    p.add_argument("--m-budget", dest="m_budget", type=int)
    p.add_argument("--n-init", dest="n_init", type=int)
    p.add_argument("--n-sub", dest="n_sub", type=int)
    p.add_argument("--n-pass", dest="n_pass", type=int)
    p.add_argument("--hyperopt-every", dest="hyperopt_every", type=int)
    p.add_argument("--fixed-theta", dest="fixed_theta", action="store_const", const=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--target-class", dest="target_class",
                   help="class index, or 'all' for a one-vs-rest sweep")
    p.add_argument("--augment", choices=("none", "four", "eight"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-query predictive table")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error rate, Brier score and diagnostics")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", action="append", required=True,
                   help="model file; repeat for a one-vs-rest ensemble")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("weights", help="dump active-point expansion weights")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("ml-compare", help="marginal-likelihood approximation table")
    _add_common(p)
    _add_data(p)
    _add_kernel(p)
    p.add_argument("--p-inc", dest="p_inc",
                   help="comma-separated inclusion thresholds; 1 = full model")
    p.add_argument("--p-del", dest="p_del", type=float)
    p.add_argument("--n-init", dest="n_init", type=int)
    p.add_argument("--n-sub", dest="n_sub", type=int)
    p.add_argument("--n-pass", dest="n_pass", type=int)
    p.add_argument("--fixed-theta", dest="fixed_theta", action="store_const", const=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--target-class", dest="target_class")
    p.set_defaults(func=cmd_ml_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args._config_values = (
        _read_config_file(args.config) if getattr(args, "config", None) else {}
    )
    try:
        return args.func(args)
    except (ConfigError, ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except PassGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
