"""Shared fixtures: small synthetic corpora and a tiny architecture."""

import numpy as np
import pytest

from moskit import datasets, model


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """3 systems x 3 utterances at 16 kHz, feature dim 12.  Cheap to train on."""
    root = tmp_path_factory.mktemp("mini_corpus")
    manifest = datasets.generate_synthetic(
        3, 3, seed=101, out_dir=root, rates=(16000,), feature_dim=12
    )
    entries = datasets.load_manifest(manifest)
    ds = datasets.UtteranceDataset(entries, root, keep_in_memory=True)
    ds.write_spec_cache(root / "spec")
    return root, manifest, entries


def tiny_arch(variant="dual_branch", ssl_dim=12):
    if variant == "ssl_only":
        return model.ArchitectureConfig(
            ssl_dim=ssl_dim,
            fpm_channels=(8, 8, 8),
            spm_blocks=(),
            branch_embed_dim=8,
            head_hidden=(8, 8, 8),
            variant="ssl_only",
        )
    return model.ArchitectureConfig(
        ssl_dim=ssl_dim,
        fpm_channels=(8, 8, 8),
        spm_blocks=((4, 3, 2), (8, 2, 1)),
        branch_embed_dim=8,
        head_hidden=(8, 8, 8),
    )


@pytest.fixture()
def mini_dataset(mini_corpus):
    root, _manifest, entries = mini_corpus
    return datasets.UtteranceDataset(
        entries, root, spec_cache_dir=root / "spec", keep_in_memory=True
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)
