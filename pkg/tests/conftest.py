"""Shared fixtures: small synthesized dataset directories, cached per
session so several test modules can reuse the same files."""

import pytest

from lofarline import storage
from lofarline.presets import spectral_preset, synthesis_preset

_CACHE = {}


@pytest.fixture(scope="session")
def dataset_dir_factory(tmp_path_factory):
    """dataset_dir_factory(snr_db, n_h0, n_h1, seed) -> Path of a written
    desk-scale dataset directory (64x64 lofargrams)."""

    def make(snr_db, n_h0, n_h1, seed):
        key = (snr_db, n_h0, n_h1, seed)
        if key not in _CACHE:
            out = tmp_path_factory.mktemp(f"ds_{snr_db}_{seed}")
            spec = synthesis_preset("desk", snr_db, n_h0, n_h1, seed)
            storage.write_dataset(out, spec, spectral_preset("desk"))
            _CACHE[key] = out
        return _CACHE[key]

    return make
