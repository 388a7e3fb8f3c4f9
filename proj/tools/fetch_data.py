#!/usr/bin/env python3
"""Fetch the small benchmark datasets used by the experiment configs.

Sources are packages reachable through ordinary package managers:
  * Boston housing (506 x 13 + target): the CSV shipped in the `mlxtend` wheel.
  * MNIST 10k subset: the 10,000 digits shipped in the `mnist` npm package,
    re-quantised to bytes and written as IDX files (8000 train / 2000 test,
    shuffled with a fixed seed).

The UCI `energy` dataset is not bundled by any package we know of. Drop
`ENB2012_data` as `data/energy.csv` (8 feature columns, heating load as the
last column) to enable the energy experiment.
"""
import argparse
import json
import pathlib
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
import zipfile


def fetch_boston(tmp: pathlib.Path, out: pathlib.Path) -> None:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                    "-d", str(tmp), "mlxtend==0.24.0"], check=True)
    wheel = next(tmp.glob("mlxtend-*.whl"))
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/boston_housing.csv").decode()
    cols = ["CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS", "RAD",
            "TAX", "PTRATIO", "B", "LSTAT", "MEDV"]
    rows = [",".join(repr(float(v)) for v in line.split(","))
            for line in raw.splitlines() if line.strip()]
    (out / "boston.csv").write_text(",".join(cols) + "\n" + "\n".join(rows) + "\n")
    print(f"boston.csv: {len(rows)} rows")


def write_idx_images(path: pathlib.Path, images) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path: pathlib.Path, labels) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def fetch_mnist(tmp: pathlib.Path, out: pathlib.Path, n_test: int) -> None:
    subprocess.run(["npm", "pack", "--silent", "mnist@1.1.0"], cwd=tmp, check=True,
                   stdout=subprocess.DEVNULL)
    with tarfile.open(next(tmp.glob("mnist-*.tgz"))) as tar:
        tar.extractall(tmp)
    samples = []
    for digit in range(10):
        data = json.loads((tmp / "package/src/digits" / f"{digit}.json").read_text())["data"]
        n = len(data) // 784
        for i in range(n):
            px = data[i * 784:(i + 1) * 784]
            samples.append(([min(255, max(0, round(v * 255))) for v in px], digit))
    random.Random(0).shuffle(samples)
    test, train = samples[:n_test], samples[n_test:]
    d = out / "mnist10k"
    d.mkdir(parents=True, exist_ok=True)
    write_idx_images(d / "train-images-idx3-ubyte", [s[0] for s in train])
    write_idx_labels(d / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_idx_images(d / "test-images-idx3-ubyte", [s[0] for s in test])
    write_idx_labels(d / "test-labels-idx1-ubyte", [s[1] for s in test])
    print(f"mnist10k: {len(train)} train, {len(test)} test")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--mnist-test", type=int, default=2000)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as t:
        tmp = pathlib.Path(t)
        fetch_boston(tmp, out)
        fetch_mnist(tmp, out, args.mnist_test)


if __name__ == "__main__":
    main()
