import hashlib
import os

import pytest

from lolguard.cli import BUNDLED_DATASET, BUNDLED_VALIDATION
from lolguard.models.classifier import Hyperparams
from lolguard.pipelines.unimodel import unimodel
from lolguard.tools.dataset import load_dataset

SMALL_BINARIES = ('certutil', 'reg', 'cmstp')


@pytest.fixture(scope='session')
def bundled_samples():
    return load_dataset(BUNDLED_DATASET)


@pytest.fixture(scope='session')
def validation_samples():
    return load_dataset(BUNDLED_VALIDATION)


@pytest.fixture(scope='session')
def fast_hyper():
    return Hyperparams(rf_tree_count=15, mlp_epochs=20)


@pytest.fixture(scope='session')
def small_samples(bundled_samples):
    """certutil and reg carry both labels, cmstp is malicious only"""
    return [s for s in bundled_samples if s.binary in SMALL_BINARIES]


@pytest.fixture(scope='session')
def small_uni(small_samples, fast_hyper):
    return unimodel.train(small_samples, fast_hyper)


def tree_hashes(root):
    """relative path -> sha256 of every file under root"""
    out = dict()
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, 'rb') as f:
                out[os.path.relpath(path, root)] = hashlib.sha256(f.read()).hexdigest()
    return out
