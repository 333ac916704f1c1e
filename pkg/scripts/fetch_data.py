"""Build the real-data fixtures under ``data/`` from package-registry tarballs.

The sandbox this project was developed in only reaches the PyPI and npm
registries, so the public datasets are pulled out of packages that vendor them:

* UCI Image Segmentation: ``segment.csv.zip`` shipped in the ``river`` sdist
  (the constant ``region-pixel-count`` column, always 9, is restored so the
  file has the original 19 attributes).
* MNIST: the IDX files shipped in the ``mnist-data`` npm package.
* Fashion-MNIST: per-class JSON pixel arrays in the ``fashion-mnist`` npm
  package, rewritten here as IDX files.

Usage: python scripts/fetch_data.py [--out data]
"""

import argparse
import gzip
import io
import json
import shutil
import struct
import subprocess
import tarfile
import tempfile
import zipfile
from pathlib import Path

import numpy as np

FASHION_CLASSES = (1, 3, 5, 7, 8, 9)  # trouser, dress, sandal, sneaker, bag, ankle boot
FASHION_PER_CLASS = 3000


def write_idx_images(path, images):
    with gzip.open(path, "wb", compresslevel=9) as fh:
        fh.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        fh.write(np.asarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.open(path, "wb", compresslevel=9) as fh:
        fh.write(struct.pack(">II", 0x801, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def build_segment(work, out):
    subprocess.run(["pip", "download", "--no-deps",
                    "river==0.23.0", "-d", str(work)], check=True)
    sdist = next(work.glob("river-*.tar.gz"))
    with tarfile.open(sdist) as tf:
        member = next(m for m in tf.getmembers() if m.name.endswith("datasets/segment.csv.zip"))
        raw = tf.extractfile(member).read()
    with zipfile.ZipFile(io.BytesIO(raw)) as zf:
        text = zf.read(zf.namelist()[0]).decode()
    lines = text.strip().splitlines()
    rows = []
    for i, line in enumerate(lines):
        cells = line.split(",")
        cells.insert(2, "region-pixel-count" if i == 0 else "9")
        rows.append(",".join(cells))
    (out / "segment.csv").write_text("\n".join(rows) + "\n")


def build_mnist(work, out):
    subprocess.run(["npm", "pack", "mnist-data@1.2.6", "--pack-destination", str(work)], check=True)
    with tarfile.open(work / "mnist-data-1.2.6.tgz") as tf:
        for name in ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            raw = tf.extractfile(f"package/data/{name}").read()
            with gzip.open(out / f"mnist-{name}.gz", "wb", compresslevel=9) as fh:
                fh.write(raw)


def build_fashion(work, out):
    subprocess.run(["npm", "pack", "fashion-mnist@1.1.0", "--pack-destination", str(work)], check=True)
    images, labels = [], []
    with tarfile.open(work / "fashion-mnist-1.1.0.tgz") as tf:
        for c in FASHION_CLASSES:
            data = json.load(tf.extractfile(f"package/src/clothes/{c}.json"))["data"]
            block = np.asarray(data[:FASHION_PER_CLASS], dtype=np.uint8)
            images.append(block)
            labels.append(np.full(len(block), c, dtype=np.uint8))
    write_idx_images(out / "fashion-images-idx3-ubyte.gz", np.concatenate(images))
    write_idx_labels(out / "fashion-labels-idx1-ubyte.gz", np.concatenate(labels))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp())
    try:
        build_segment(work, out)
        build_mnist(work, out)
        build_fashion(work, out)
    finally:
        shutil.rmtree(work, ignore_errors=True)


if __name__ == "__main__":
    main()
