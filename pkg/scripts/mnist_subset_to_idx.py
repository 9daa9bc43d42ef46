"""Write the 5000-digit MNIST sample bundled with mlxtend as an IDX file pair.

    pip download mlxtend --no-deps -d /tmp/mlx
    python scripts/mnist_subset_to_idx.py /tmp/mlx/mlxtend-*.whl data/mnist

The source may be the wheel, the ``mnist_5k.csv.gz`` inside it, or omitted
when mlxtend is installed. The sample ships sorted by digit; rows are
shuffled with a fixed seed so that leading subsets cover every class, as
they do in the original MNIST files.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from qefl.data import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_source(src):
    if src is None:
        import mlxtend.data

        src = Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz"
    src = Path(src)
    raw = zipfile.ZipFile(src).read(MEMBER) if src.suffix == ".whl" else src.read_bytes()
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",", dtype=np.int64)
    return table[:, :-1], table[:, -1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("source", nargs="?")
    p.add_argument("out_dir", nargs="?", default="data/mnist")
    args = p.parse_args()
    X, y = read_source(args.source)
    order = np.random.default_rng(0).permutation(len(y))
    X, y = X[order], y[order]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(X, y, out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    print(f"wrote {len(y)} examples to {out}")


if __name__ == "__main__":
    main()
