from __future__ import annotations

import numpy as np
import pytest

from radiant.synth import (
    CameraRig,
    GroundPlane,
    Primitive,
    SceneSpec,
    generate_scene,
    heldout_cameras,
    orbit_cameras,
    render_dataset,
)


def tiny_spec(**overrides) -> SceneSpec:
    """A fast desk-scale scene: 32^3 grid, 8 views, 32x32 images."""
    kwargs = dict(
        primitives=[
            Primitive("sphere", (0.0, -0.05, 0.0), 0.42, (0.85, 0.16, 0.12), "object"),
            Primitive("box", (-0.7, 0.45, 0.5), (0.2, 0.3, 0.2), (0.15, 0.55, 0.2), "background"),
        ],
        ground_plane=GroundPlane(),
        resolution=(32, 32, 32),
        rig=CameraRig(count=8, image_width=32, image_height=32),
        samples_per_ray=64,
        heldout_count=4,
    )
    kwargs.update(overrides)
    return SceneSpec(**kwargs)


@pytest.fixture(scope="session")
def tiny_scene():
    spec = tiny_spec()
    fields = generate_scene(spec)
    cams = orbit_cameras(spec.rig)
    return spec, fields, cams


@pytest.fixture(scope="session")
def tiny_object_dataset(tiny_scene):
    spec, fields, cams = tiny_scene
    return render_dataset(fields, cams, spec, which="object")


@pytest.fixture(scope="session")
def tiny_background_dataset(tiny_scene):
    spec, fields, cams = tiny_scene
    return render_dataset(fields, cams, spec, which="background")


@pytest.fixture(scope="session")
def tiny_full_dataset(tiny_scene):
    spec, fields, cams = tiny_scene
    return render_dataset(fields, cams, spec, which="full")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    from radiant.core import rotation_about_axis
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_about_axis(axis, rng.uniform(-180.0, 180.0))
