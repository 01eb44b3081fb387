import numpy as np
import pytest

from subriem.errors import ConfigError, SingularFrameError, UnknownScenarioError
from subriem.geometry import growth_vector
from subriem.scenarios import NAMES, SKEW_EPSILON, Scenario, load, validate
from subriem.geometry import SRStructure


def test_names():
    assert NAMES == ("heisenberg", "martinet", "skew_heisenberg", "hopf_su2", "ym_plane_so3")


@pytest.mark.parametrize("name", NAMES)
def test_loads(name):
    sc = load(name)
    assert sc.name == name
    assert sc.structure is not None or sc.bundle is not None


def test_unknown():
    with pytest.raises(UnknownScenarioError) as info:
        load("nope")
    assert isinstance(info.value, ConfigError)


def test_growth_oracles(heisenberg, martinet, hopf):
    assert growth_vector(heisenberg.structure, [0, 0, 0]).growth == heisenberg.oracles["growth"]
    assert growth_vector(martinet.structure, [0, 0, 0]).growth == martinet.oracles["growth_origin"]
    assert growth_vector(martinet.structure, [0, 1, 0]).growth == martinet.oracles["growth_y1"]
    assert growth_vector(hopf.structure, [0.3, 0.2, 0.1]).growth == [2, 3]


def test_group_flags(ym, hopf):
    assert ym.bundle.group.is_ad_invariant
    assert not ym.bundle.group.is_abelian
    assert hopf.group.group.name == "su2"


def test_skew_epsilon(skew):
    assert SKEW_EPSILON == 0.1
    q = np.array([0.5, 0.0, 0.0])
    x2 = skew.structure.X[1].value(q)
    assert x2[2] == pytest.approx(0.25 + 0.1 * 0.25)


def test_missing_parts(martinet, ym):
    with pytest.raises(UnknownScenarioError):
        martinet.require_bundle()
    with pytest.raises(UnknownScenarioError):
        ym.require_structure()


def test_validation_rejects_singular_frame():
    S = SRStructure([["1", "0", "0"], ["0", "1", "0"]], [["0", "0", "q1"]])
    with pytest.raises(SingularFrameError):
        validate(Scenario("bad", "", S))
