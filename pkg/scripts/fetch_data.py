"""
Download the benchmark datasets into the cache root

Layout written: <root>/mnist/*-ubyte.gz, <root>/cifar10/cifar-10-batches-bin/*.bin,
<root>/cifar100/cifar-100-binary/*.bin, plus <root>/<name>/MANIFEST.sha256.

Usage: python scripts/fetch_data.py [mnist] [cifar10] [cifar100] [--root DIR]
"""
import argparse
import hashlib
import sys
import tarfile
from pathlib import Path
from typing import Dict, List, Tuple

import requests

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "app"))

from core.config import settings  # noqa: E402
from core.logging import get_logger  # noqa: E402

logger = get_logger("scripts.fetch_data")

CHUNK = 1 << 20
TIMEOUT = 60

# name -> [(url, published md5)]
SOURCES: Dict[str, List[Tuple[str, str]]] = {
    "mnist": [
        ("https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
        ("https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
        ("https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
        ("https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
    ],
    "cifar10": [
        ("https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz", "c32a1d4ab5d03f1284b67883e8d87530"),
    ],
    "cifar100": [
        ("https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz", "03b5dce01913d631647c71ecec9e9cb8"),
    ],
}


def file_digest(path: Path, algorithm: str) -> str:
    h = hashlib.new(algorithm)
    with path.open("rb") as f:
        for block in iter(lambda: f.read(CHUNK), b""):
            h.update(block)
    return h.hexdigest()


def download(url: str, target: Path, md5: str) -> Path:
    """Stream `url` to `target`, skipping the request when a verified copy exists"""
    if target.exists() and file_digest(target, "md5") == md5:
        logger.info(f"{target.name} already present")
        return target
    logger.info(f"downloading {url}")
    tmp = target.with_suffix(target.suffix + ".part")
    with requests.get(url, stream=True, timeout=TIMEOUT) as response:
        response.raise_for_status()
        with tmp.open("wb") as f:
            for chunk in response.iter_content(chunk_size=CHUNK):
                f.write(chunk)
    digest = file_digest(tmp, "md5")
    if digest != md5:
        tmp.unlink()
        raise RuntimeError(f"{url}: md5 {digest} does not match the published {md5}")
    tmp.replace(target)
    return target


def write_manifest(folder: Path) -> Path:
    manifest = folder / "MANIFEST.sha256"
    lines = [
        f"{file_digest(path, 'sha256')}  {path.relative_to(folder)}"
        for path in sorted(folder.rglob("*"))
        if path.is_file() and path != manifest and not path.name.endswith(".tar.gz")
    ]
    manifest.write_text("\n".join(lines) + "\n")
    logger.info(f"wrote {manifest} ({len(lines)} files)")
    return manifest


def fetch(name: str, root: Path) -> None:
    folder = root / name
    folder.mkdir(parents=True, exist_ok=True)
    for url, md5 in SOURCES[name]:
        archive = download(url, folder / url.rsplit("/", 1)[-1], md5)
        if archive.name.endswith(".tar.gz"):
            with tarfile.open(archive, "r:gz") as tar:
                tar.extractall(folder)
            archive.unlink()
    write_manifest(folder)


def main() -> int:
    parser = argparse.ArgumentParser(description="Fetch benchmark datasets")
    parser.add_argument("names", nargs="*", default=list(SOURCES), choices=list(SOURCES))
    parser.add_argument("--root", default=str(settings.DATA_ROOT))
    args = parser.parse_args()
    root = Path(args.root)
    for name in args.names:
        try:
            fetch(name, root)
        except (requests.RequestException, RuntimeError, tarfile.TarError) as e:
            logger.error(f"failed to fetch {name}: {e}")
            return 1
    logger.info(f"datasets ready under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
