"""radiant: a differentiable voxel radiance-field engine for disentangled
3D object editing.

A scene is split into an object field and a background field; the object
is edited through an iterative dataset-update loop with pluggable 2D
editors, then re-composed with the background by depth-sorting the two
fields' ray samples, optionally scaled / rotated / translated about its
centroid.
"""

from .core import (
    Camera,
    MaskImage,
    Ray,
    RaySamples,
    RgbaImage,
    SrtTransform,
    VoxelField,
    rotation_about_axis,
    srt_canonical_to_world,
    srt_density_correction,
    srt_world_to_canonical,
    trilinear_query,
)
from .render import (
    RenderConfig,
    RenderedView,
    composite_ray,
    generate_ray,
    merge_samples,
    object_centroid,
    render_merged,
    render_view,
    sample_along_ray,
)
from .optim import (
    AdamState,
    DivergenceError,
    TrainConfig,
    adam_step,
    backprop_ray,
    blended_photometric_loss,
    depth_loss,
    train_background_field,
    train_object_field,
)
from .idu import (
    EditInstruction,
    IduDataset,
    IduSchedule,
    alpha_blend_black,
    apply_mask,
    builtin_editor,
    idu_run,
)
from .synth import (
    MultiViewDataset,
    SceneSpec,
    generate_scene,
    leakage,
    mask_from_alpha,
    oracle_inpaint,
    psnr,
    render_dataset,
)
from .bridge import (
    ProtocolViolation,
    RemoteEndpoint,
    RemoteRejected,
    RemoteUnavailable,
    remote_edit,
    remote_inpaint,
)

__version__ = "0.1.0"
