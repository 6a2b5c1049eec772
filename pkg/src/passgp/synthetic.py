"""Deterministic synthetic datasets for tests, fixtures and benchmarks."""

import numpy as np

from .data_io import Dataset


def gaussian_blobs(n, seed=0, separation=2.0, dim=2, balance=0.5):
    """Two overlapping Gaussian clusters with +1/-1 labels.

    separation is the distance between the class means in units of the
    (unit) cluster standard deviation; around 2 gives visibly overlapping
    classes with an irreducible error of a few percent.
    """
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * balance))
    offset = np.zeros(dim)
    offset[0] = separation / 2.0
    X = np.vstack([
        rng.normal(size=(n_pos, dim)) + offset,
        rng.normal(size=(n - n_pos, dim)) - offset,
    ])
    y = np.concatenate([np.ones(n_pos, dtype=np.int64),
                        -np.ones(n - n_pos, dtype=np.int64)])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], {"name": f"blobs(n={n},seed={seed})"})


def two_arcs(n, seed=0, noise=0.15):
    """Interleaved half-circle classes (nonlinear decision boundary)."""
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    t1 = rng.uniform(0.0, np.pi, size=n_pos)
    t2 = rng.uniform(0.0, np.pi, size=n - n_pos)
    upper = np.column_stack([np.cos(t1), np.sin(t1)])
    lower = np.column_stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)])
    X = np.vstack([upper, lower]) + rng.normal(scale=noise, size=(n, 2))
    y = np.concatenate([np.ones(n_pos, dtype=np.int64),
                        -np.ones(n - n_pos, dtype=np.int64)])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], {"name": f"arcs(n={n},seed={seed})"})


def three_class_blobs(n, seed=0, separation=3.0):
    """Three Gaussian clusters with integer labels 0/1/2 (one-vs-rest tests)."""
    rng = np.random.default_rng(seed)
    per = n // 3
    counts = [per, per, n - 2 * per]
    angles = [0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0]
    parts, labels = [], []
    for cls, (cnt, ang) in enumerate(zip(counts, angles)):
        center = separation / 2.0 * np.array([np.cos(ang), np.sin(ang)])
        parts.append(rng.normal(size=(cnt, 2)) + center)
        labels.append(np.full(cnt, cls, dtype=np.int64))
    X = np.vstack(parts)
    y = np.concatenate(labels)
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], {"name": f"blobs3(n={n},seed={seed})"})


def write_csv(ds, path):
    """Feature columns plus trailing label column, comma separated."""
    with open(path, "w") as fh:
        for x, lab in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in x) + f",{int(lab)}\n")


def _main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(
        description="write the deterministic fixture datasets as CSV"
    )
    parser.add_argument("outdir")
    parser.add_argument("--n-train", type=int, default=400)
    parser.add_argument("--n-test", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    import pathlib

    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(gaussian_blobs(args.n_train, seed=args.seed), out / "blobs_train.csv")
    write_csv(gaussian_blobs(args.n_test, seed=args.seed + 1), out / "blobs_test.csv")
    write_csv(two_arcs(args.n_train, seed=args.seed), out / "arcs_train.csv")
    write_csv(two_arcs(args.n_test, seed=args.seed + 1), out / "arcs_test.csv")
    write_csv(three_class_blobs(args.n_train, seed=args.seed), out / "blobs3_train.csv")
    write_csv(three_class_blobs(args.n_test, seed=args.seed + 1), out / "blobs3_test.csv")
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    _main()
