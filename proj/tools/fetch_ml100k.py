#!/usr/bin/env python3
"""Fetch MovieLens-100K and write it as user<TAB>item<TAB>grade lines.

MovieLens data may not be redistributed, so it is not part of this
repository. The script tries, in order:

  1. a local copy of the original archive's ``u.data`` (``--u-data PATH``),
  2. the GroupLens archive (https://files.grouplens.org/datasets/movielens/ml-100k.zip),
  3. the copy of ``ml-100k.inter`` shipped inside the RecBole wheel on PyPI.

The grade written is the raw 1-5 rating; ``adafm prepare --binarize``
turns every rating into an implicit interaction.
"""

import argparse
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
RECBOLE_SPEC = "recbole==1.2.1"
RECBOLE_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def rows_from_u_data(text):
    for line in text.splitlines():
        parts = line.split("\t")
        if len(parts) >= 3:
            yield parts[0], parts[1], parts[2]


def rows_from_inter(text):
    lines = text.splitlines()
    for line in lines[1:]:  # header: user_id:token item_id:token rating:float timestamp:float
        parts = line.split("\t")
        if len(parts) >= 3:
            yield parts[0], parts[1], str(int(float(parts[2])))


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS_URL, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return list(rows_from_u_data(archive.read("ml-100k/u.data").decode("latin-1")))


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", RECBOLE_SPEC, "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        archive = zipfile.ZipFile(os.path.join(tmp, wheel))
        return list(rows_from_inter(archive.read(RECBOLE_MEMBER).decode("utf-8")))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/ml-100k.tsv")
    parser.add_argument("--u-data", help="path to an existing ml-100k/u.data")
    args = parser.parse_args()

    rows = None
    if args.u_data:
        with open(args.u_data, encoding="latin-1") as f:
            rows = list(rows_from_u_data(f.read()))
    else:
        for source in (from_grouplens, from_recbole):
            try:
                rows = source()
                break
            except Exception as exc:  # noqa: BLE001 - try the next source
                print(f"{source.__name__}: {exc}", file=sys.stderr)
    if not rows:
        sys.exit("could not obtain MovieLens-100K from any source")

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("# MovieLens-100K: user, item, rating\n")
        for user, item, grade in rows:
            f.write(f"{user}\t{item}\t{grade}\n")
    print(f"wrote {len(rows)} interactions to {args.out}")


if __name__ == "__main__":
    main()
