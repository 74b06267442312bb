import pytest

from c1vol.volumes import generic_two_patch, generic_wedge, load_fixture


@pytest.fixture(scope="session")
def threepatch():
    return load_fixture("threepatch")


@pytest.fixture(scope="session")
def fourpatch():
    return load_fixture("fourpatch-nongeneric")


@pytest.fixture(scope="session")
def twocube():
    return load_fixture("twocube")


@pytest.fixture(scope="session")
def twopatch():
    return load_fixture("twopatch")


@pytest.fixture(scope="session")
def wedge5():
    return generic_wedge(5, seed=1, ks=(0, 2))


@pytest.fixture(scope="session")
def random_two_patch():
    return generic_two_patch(seed=3, ks=(0, 1))
