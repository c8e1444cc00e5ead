"""Bundled example datasets.

Synthetic analogs of classic survey samples, calibrated so their
design-based estimates match the published values (see
``scripts/make_fixtures.py`` for the construction):

* ``apiclus1`` - single-stage cluster sample, 183 schools in 15 districts
* ``apistrat`` - stratified sample of 200 schools (strata = school type)
* ``nsduh_synth`` - household-survey analog with nested strata/PSUs
"""

from importlib import resources

import pandas as pd

_NAMES = ("apiclus1", "apistrat", "nsduh_synth")


def example_path(name: str) -> str:
    """Filesystem path of a bundled dataset CSV."""
    if name not in _NAMES:
        raise KeyError(f"unknown dataset {name!r}; available: {_NAMES}")
    return str(resources.files(__package__).joinpath(f"{name}.csv"))


def load_example(name: str) -> pd.DataFrame:
    """Load a bundled dataset as a DataFrame."""
    return pd.read_csv(example_path(name))
