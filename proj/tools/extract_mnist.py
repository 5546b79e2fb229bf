#!/usr/bin/env python3
"""Write data/mnist_5k.csv from the 5,000-row MNIST sample bundled with mlxtend.

Either point --wheel at a downloaded wheel (`pip download mlxtend --no-deps`)
or have mlxtend installed. Output columns: p0..p783 then `label` (digit 0-9).
"""

import argparse
import csv
import gzip
import importlib.util
import io
import pathlib
import sys
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_raw(wheel):
    if wheel:
        with zipfile.ZipFile(wheel) as z:
            return z.read(MEMBER)
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        sys.exit("mlxtend not installed; pass --wheel")
    root = pathlib.Path(list(spec.submodule_search_locations)[0]).parent
    return (root / MEMBER).read_bytes()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wheel", help="path to an mlxtend wheel")
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "mnist_5k.csv"))
    args = ap.parse_args()

    rows = list(csv.reader(io.StringIO(gzip.decompress(read_raw(args.wheel)).decode())))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"p{i}" for i in range(784)] + ["label"])
        for r in rows:
            w.writerow([str(int(float(v))) for v in r])
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
