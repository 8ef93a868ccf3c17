"""
Data Service - resolves configured IDX paths and loads the train/eval
datasets every experiment starts from.
"""

from pathlib import Path
from typing import List, Optional, Tuple

from ..core.config import get_settings
from ..core.errors import DataError
from ..core.logging import get_logger
from ..data.mnist import Dataset, build_manifest, file_checksum, load_idx, split_disjoint, subsample, verify_checksum

logger = get_logger(__name__)


class DataService:
    """Loads datasets described by a ``DataConfig`` and records what was read."""

    def __init__(self, data_cfg, seed: int = 0):
        self.cfg = data_cfg
        self.seed = seed
        self.records: List[dict] = []

    def resolve(self, name: str) -> Path:
        path = Path(name)
        if not path.is_absolute():
            base = self.cfg.dir or get_settings().data_dir
            if base is not None:
                path = Path(base) / path
        if not path.exists():
            gz = path.with_name(path.name + ".gz")
            if gz.exists():
                return gz
            raise DataError(f"dataset file not found: {path}")
        return path

    def _load(self, images: str, labels: str, split: str) -> Dataset:
        images_path, labels_path = self.resolve(images), self.resolve(labels)
        for path in (images_path, labels_path):
            expected = self.cfg.checksums.get(path.name)
            if expected:
                verify_checksum(path, expected)
        ds = load_idx(images_path, labels_path, split)
        return ds

    def has_test_split(self) -> bool:
        try:
            self.resolve(self.cfg.test_images)
            self.resolve(self.cfg.test_labels)
        except DataError:
            return False
        return True

    def train_eval(self, train_size: Optional[int] = None, eval_size: Optional[int] = None
                   ) -> Tuple[Dataset, Dataset]:
        """
        Subsampled training set plus a disjoint evaluation set: drawn from
        the test split when present, otherwise carved out of the training
        split.
        """
        train_size = train_size or self.cfg.train_size
        eval_size = eval_size or self.cfg.eval_size
        full = self._load(self.cfg.train_images, self.cfg.train_labels, "train")
        if self.has_test_split():
            ds_train = subsample(full, train_size, self.seed)
            test = self._load(self.cfg.test_images, self.cfg.test_labels, "test")
            ds_eval = subsample(test, eval_size, self.seed)
        else:
            logger.warning("No test split configured; evaluation set carved from training split")
            ds_train, ds_eval = split_disjoint(full, train_size, eval_size, self.seed)
        self.records.extend([build_manifest(ds_train), build_manifest(ds_eval)])
        logger.info("Datasets loaded", train=len(ds_train), eval=len(ds_eval))
        return ds_train, ds_eval

    def eval_only(self, size: int) -> Dataset:
        if self.has_test_split():
            ds = subsample(self._load(self.cfg.test_images, self.cfg.test_labels, "test"), size, self.seed)
        else:
            ds = subsample(self._load(self.cfg.train_images, self.cfg.train_labels, "train"), size, self.seed)
        self.records.append(build_manifest(ds))
        return ds


def inspect(images: str | Path, labels: str | Path, split: str = "train") -> dict:
    """Dataset manifest for one IDX pair."""
    return build_manifest(load_idx(images, labels, split))


def fetch(images: str | Path, labels: str | Path, dest: str | Path, checksums: dict, split: str = "train") -> dict:
    """
    Verify user-supplied IDX files against expected SHA-256 digests, copy
    them into ``dest`` and return their manifest. No network access.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    copied = []
    for path in (Path(images), Path(labels)):
        expected = checksums.get(path.name)
        if expected:
            verify_checksum(path, expected)
        else:
            logger.warning("No expected checksum configured", file=path.name, sha256=file_checksum(path))
        target = dest / path.name
        if path.resolve() != target.resolve():
            target.write_bytes(path.read_bytes())
        copied.append(target)
    return build_manifest(load_idx(copied[0], copied[1], split))
