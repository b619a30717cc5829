"""meshforge: mesh-to-training-record preprocessing pipeline and math kernels."""

__version__ = "0.1.0"

from .mesh import (  # noqa: F401
    Aabb,
    Mesh,
    MeshError,
    NormalizationTransform,
    compute_aabb,
    mesh_volume,
    normalize_mesh,
    normalize_point_cloud,
)
from .meshio import LoadReport, load_mesh, read_mesh, save_mesh  # noqa: F401
from .bvh import Bvh, build_bvh  # noqa: F401
from .field import (  # noqa: F401
    SdfGrid,
    bake_sdf_grid,
    closest_point,
    load_sdf_grid,
    save_sdf_grid,
    signed_distance,
    signed_distance_many,
    winding_number,
)
from .isosurface import (  # noqa: F401
    WatertightReport,
    check_watertight,
    make_watertight,
    marching_cubes,
)
from .rng import RngStream, derive_seed  # noqa: F401
from .sampler import (  # noqa: F401
    QuerySet,
    QuerySetConfig,
    SurfaceSamples,
    build_query_set,
    farthest_point_sampling,
    sample_near_surface,
    sample_surface_sharp,
    sample_surface_uniform,
    sample_volume_uniform,
)
from .camera import (  # noqa: F401
    CameraSpec,
    LightSpec,
    build_condition_rig,
    build_texture_rig,
    hammersley_sphere,
    look_at_matrix,
    radical_inverse,
    radius_for_fov,
    sample_reference_view,
)
from .render import RenderBuffers, render, write_images  # noqa: F401
from .flowmatch import (  # noqa: F401
    AffineVelocity,
    CallableVelocity,
    FlowBatch,
    GaussianLatentStats,
    TanhMLPVelocity,
    TrainConfig,
    euler_sample,
    fm_loss,
    interpolate_path,
    kl_diag_gaussian,
    target_velocity,
    train_toy,
    vae_loss,
)
from .pipeline import (  # noqa: F401
    DatasetRecord,
    PipelineConfig,
    process_asset,
    run_batch,
    validate_record,
)
