import numpy as np
import pytest

from gridloc import (
    ABOVE_CANOPY_MODEL,
    BELOW_CANOPY_MODEL,
    GridField,
    LocationPmf,
)


@pytest.fixture
def field_m2():
    return GridField(60.0, 30.0)


@pytest.fixture
def field_m4():
    return GridField(120.0, 30.0)


@pytest.fixture
def field_m15():
    return GridField(447.2136, 30.0)


@pytest.fixture
def below():
    return BELOW_CANOPY_MODEL


@pytest.fixture
def above():
    return ABOVE_CANOPY_MODEL


def smooth_pmf(field: GridField, rng: np.random.Generator,
               sigma_cells=(4.0, 6.0), floor_weight=0.3) -> LocationPmf:
    """Gaussian bump mixed with a uniform floor; the codec's smooth-posterior family."""
    m = field.m
    cx, cy = rng.uniform(2, m - 3, 2)
    sig = rng.uniform(*sigma_cells)
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    bump = np.exp(-((ii - cy) ** 2 + (jj - cx) ** 2) / (2 * sig * sig))
    bump = bump.ravel() / bump.sum()
    values = (1 - floor_weight) * bump + floor_weight / (m * m)
    return LocationPmf(field, values).normalize()
