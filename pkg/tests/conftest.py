import pytest

from ai4ar.geometry import SceneSpec, gen_fixture_scene
from ai4ar.manifest import SequenceManifest


@pytest.fixture(scope="session")
def demo_scene(tmp_path_factory):
    """A small rendered sequence shared by the integration-flavored tests."""
    root = tmp_path_factory.mktemp("scene") / "seq"
    spec = SceneSpec(name="demo", frames=40, fps=30, width=320, height=240,
                     fx=300.0, fy=300.0, trajectory="translate",
                     velocity_mm=(2.0, 1.0, 0.0))
    gen_fixture_scene(spec, 7, root)
    return root


@pytest.fixture(scope="session")
def demo_manifest(demo_scene):
    return SequenceManifest.load(demo_scene)
