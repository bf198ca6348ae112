#!/usr/bin/env python3
"""Write Fashion-MNIST as gzipped IDX files under $DIREP_DATA_DIR/fashion.

Uses the original IDX files when a mirror URL is reachable; otherwise
converts the per-class JSON dump shipped by the `fashion-mnist` npm package
(6000 train + 1000 test images per class, the same split sizes as the
original release).
"""

import argparse
import gzip
import json
import os
import random
import shutil
import struct
import subprocess
import sys
import tempfile
import urllib.request
from pathlib import Path

FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]
MIRROR = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/"
NPM_PACKAGE = "fashion-mnist@1.1.0"
TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_images(path, images):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def try_download(out):
    try:
        for name in FILES:
            with urllib.request.urlopen(MIRROR + name, timeout=20) as r, open(out / name, "wb") as f:
                shutil.copyfileobj(r, f)
        return True
    except OSError as err:
        print(f"direct download failed ({err}); falling back to npm", file=sys.stderr)
        return False


def npm_class_dir(package_dir):
    if package_dir:
        return Path(package_dir) / "src" / "clothes"
    tmp = Path(tempfile.mkdtemp())
    subprocess.run(["npm", "pack", NPM_PACKAGE], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
    tarball = next(tmp.glob("*.tgz"))
    subprocess.run(["tar", "xzf", tarball.name], cwd=tmp, check=True)
    return tmp / "package" / "src" / "clothes"


def convert_npm(out, package_dir):
    classes = npm_class_dir(package_dir)
    train, test = [], []
    for label in range(10):
        with open(classes / f"{label}.json") as f:
            images = [img for img in json.load(f)["data"] if len(img) == 28 * 28]  # class 0 has empty entries
        if len(images) < TRAIN_PER_CLASS + TEST_PER_CLASS:
            sys.exit(f"class {label}: only {len(images)} images")
        for img in images[:TRAIN_PER_CLASS]:
            train.append((img, label))
        for img in images[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]:
            test.append((img, label))
    rng = random.Random(0)
    rng.shuffle(train)
    rng.shuffle(test)
    for prefix, rows in (("train", train), ("t10k", test)):
        write_images(out / f"{prefix}-images-idx3-ubyte.gz", [img for img, _ in rows])
        write_labels(out / f"{prefix}-labels-idx1-ubyte.gz", [lab for _, lab in rows])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default=os.environ.get("DIREP_DATA_DIR", "data"))
    parser.add_argument("--npm-package-dir", help="already extracted npm package directory")
    parser.add_argument("--no-download", action="store_true", help="skip the direct mirror")
    args = parser.parse_args()

    out = Path(args.data_dir) / "fashion"
    out.mkdir(parents=True, exist_ok=True)
    if all((out / name).exists() for name in FILES):
        print(f"{out}: already present")
        return
    if args.no_download or args.npm_package_dir or not try_download(out):
        convert_npm(out, args.npm_package_dir)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
